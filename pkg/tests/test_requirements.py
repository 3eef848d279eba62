import os
import re

import pytest

ROOT = os.path.join(os.path.dirname(__file__), "..", "formation_sensing_system")


def _read(*parts):
    with open(os.path.join(ROOT, *parts), "r", encoding="utf-8") as f:
        return f.read()


def _modules(package):
    directory = os.path.join(ROOT, package)
    return sorted(name for name in os.listdir(directory) if name.endswith(".py"))


def test_no_hardcoded_scenario_data():
    # Scenario geometry belongs in config/, never in the runtime.
    suspicious_terms = ["172", "113, 94", "[100, 100, 50]", "sensing-s1"]
    for parts in [("actors", "workers.py"), ("core", "orchestrator.py"), ("actors", "base_worker.py")]:
        content = _read(*parts)
        for term in suspicious_terms:
            assert term not in content, f"Found hardcoded scenario value '{term}' in {os.path.join(*parts)}"


@pytest.mark.parametrize("module", _modules("logic_blocks"))
def test_logic_blocks_stay_below_the_runtime(module):
    content = _read("logic_blocks", module)
    for layer in ("actors", "orchestrator", "templates", "cognition"):
        assert not re.search(rf"from \.\.{layer}\b|from \.\.core\.{layer}\b", content), (
            f"logic_blocks/{module} imports the {layer} layer"
        )


@pytest.mark.parametrize("package", ["actors", "cognition", "core", "infrastructure", "logic_blocks", "templates"])
def test_package_code_logs_instead_of_printing(package):
    for module in _modules(package):
        assert "print(" not in _read(package, module), f"{package}/{module} prints; use a logger"
