from django.core.exceptions import ValidationError
from django.core.validators import BaseValidator, MinValueValidator, RegexValidator

from .exceptions import ConfigurationError

__all__ = [
    'container_validator', 'flag_validators', 'positive_count_validators',
    'positive_real_validators', 'unit_interval_validators', 'scale_validators',
    'non_negative_validators', 'patch_size_validators', 'SUPPORTED_SCALES',
    'GreaterThanValidator', 'LessThanValidator', 'run_validators',
]

SUPPORTED_SCALES = (2, 3, 4)


class GreaterThanValidator(BaseValidator):
    code = 'greater_than'

    def compare(self, a, b):
        return a <= b


class LessThanValidator(BaseValidator):
    code = 'less_than'

    def compare(self, a, b):
        return a >= b


# Messages are plain strings so validation works without a configured Django settings module
container_validator = RegexValidator(r"^\d+(?:_\d+)?$", message="container must look like N or N_k", code='container')
flag_validators = {
    'cpu': RegexValidator(r"^[23]$", message="convolutions per unit must be 2 or 3"),
    'relu': RegexValidator(r"^(?:before|after)$", message="relu position must be 'before' or 'after'"),
    'proj': RegexValidator(r"^[13]$", message="projection kernel must be 1 or 3"),
    'head': RegexValidator(r"^[1-9]\d*$", message="head convolution count must be a positive integer"),
    'tail': RegexValidator(r"^[1-9]\d*$", message="tail convolution count must be a positive integer"),
}
positive_count_validators = (MinValueValidator(1, message="must be at least %(limit_value)s"),)
positive_real_validators = (GreaterThanValidator(0, message="must be greater than %(limit_value)s"),)
unit_interval_validators = (
    MinValueValidator(0, message="must be at least %(limit_value)s"),
    LessThanValidator(1, message="must be less than %(limit_value)s"),
)
non_negative_validators = (MinValueValidator(0, message="must be at least %(limit_value)s"),)
patch_size_validators = (MinValueValidator(9, message="must be at least %(limit_value)s"),)
scale_validators = (
    RegexValidator(r"^[234]$", message="supported scales are 2, 3 and 4"),
)


def run_validators(value, validators, field, error=ConfigurationError):
    """Run Django validators against ``value`` and re-raise failures as ``error`` naming ``field``."""
    try:
        for validator in validators:
            validator(value)
    except ValidationError as e:
        raise error(f"{field}: {'; '.join(e.messages)} (got {value!r})") from None
    return value
