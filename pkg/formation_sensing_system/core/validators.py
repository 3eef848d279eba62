"""
Schema Validators - Validation guards at block and worker boundaries.
"""

import functools
import logging
from typing import Type

from pydantic import BaseModel, ValidationError

from .exceptions import InvalidArgumentError

logger = logging.getLogger("Validators")


def validate_schema(input_model: Type[BaseModel] = None, output_model: Type[BaseModel] = None):
    """
    Decorator that validates input/output at block boundaries.
    Dict inputs are coerced into `input_model`; anything else of the wrong type is rejected.

    Usage:
        @validate_schema(input_model=VfeoContext, output_model=VfeoResult)
        def optimize(ctx: VfeoContext, ...) -> VfeoResult:
            ...
    """

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            if input_model and args:
                first_arg = args[0]
                if not isinstance(first_arg, input_model):
                    if not isinstance(first_arg, dict):
                        raise InvalidArgumentError(
                            f"Expected {input_model.__name__}, got {type(first_arg).__name__}"
                        )
                    try:
                        args = (input_model(**first_arg),) + args[1:]
                    except ValidationError as e:
                        logger.error(f"Input validation failed: {e}")
                        raise InvalidArgumentError(f"Schema validation failed: {e}") from e

            result = func(*args, **kwargs)

            if output_model and result is not None and not isinstance(result, output_model):
                if not isinstance(result, dict):
                    raise InvalidArgumentError(
                        f"Expected {output_model.__name__}, got {type(result).__name__}"
                    )
                try:
                    result = output_model(**result)
                except ValidationError as e:
                    logger.error(f"Output validation failed: {e}")
                    raise InvalidArgumentError(f"Output schema validation failed: {e}") from e

            return result

        return wrapper

    return decorator


def validate_context(func):
    """Guard for worker entry points: the blackboard must be a CycleContext."""

    @functools.wraps(func)
    def wrapper(self, context, *args, **kwargs):
        from .models import CycleContext

        if not isinstance(context, CycleContext):
            raise TypeError(
                f"Expected CycleContext, got {type(context).__name__}. "
                f"All workers must receive CycleContext."
            )
        return func(self, context, *args, **kwargs)

    return wrapper
