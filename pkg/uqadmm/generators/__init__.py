"""
Test-problem generators for the consensus experiments
"""
from .base import GeneratedProblem, ProblemGenerator, build_prior

__all__ = [
    'GeneratedProblem',
    'ProblemGenerator',
    'UnknownGeneratorError',
    'build_prior',
    'AVAILABLE_GENERATORS',
    'get_problem_generator',
]

# Lazy-loaded generator registry
_GENERATOR_CACHE = {}


class UnknownGeneratorError(ValueError):
    """Raised when a run references an unsupported problem generator."""


def _get_generator_class(name: str):
    """Lazy load generator classes so imaging code is only imported when used"""
    if name in _GENERATOR_CACHE:
        return _GENERATOR_CACHE[name]

    if name == 'identity_quadrants':
        from .identity_quadrants import IdentityQuadrantsGenerator as generator_class
    elif name == 'deblur':
        from .deblur import DeblurGenerator as generator_class
    elif name == 'tomo':
        from .tomo import TomoGenerator as generator_class
    elif name == 'mtx':
        from .mtx import MatrixMarketGenerator as generator_class
    else:
        return None
    _GENERATOR_CACHE[name] = generator_class
    return generator_class


# Registry of all available generators
AVAILABLE_GENERATORS = {
    'identity_quadrants': lambda: _get_generator_class('identity_quadrants'),
    'deblur': lambda: _get_generator_class('deblur'),
    'tomo': lambda: _get_generator_class('tomo'),
    'mtx': lambda: _get_generator_class('mtx'),
}


def get_problem_generator(name: str) -> ProblemGenerator:
    """
    Get a problem generator instance by name

    Args:
        name: Generator identifier (identity_quadrants, deblur, tomo, mtx)

    Returns:
        ProblemGenerator: Instance of the matching generator

    Raises:
        UnknownGeneratorError: If the name is not recognized
    """
    if name not in AVAILABLE_GENERATORS:
        raise UnknownGeneratorError(
            f"Unknown generator: {name}. Available generators: {list(AVAILABLE_GENERATORS.keys())}"
        )

    generator_class = _get_generator_class(name)
    if not generator_class:
        raise UnknownGeneratorError(f"Failed to load generator: {name}")

    return generator_class()
