"""
Services package
Núcleo numérico: tensores densos, odeco, descomposición, perturbación,
CP incoherentes y experimentos
"""
from .decompose import IterationConfig, decompose_odeco, find_tuple, hosvd
from .odeco import OdecoTensor, SingularTuple, enumerate_tuples, random_odeco, to_dense
from .perturb import constants, match_tuples, verify_bounds
from .tensor_core import DenseTensor, Rank1Point, SpectralNormConfig, spectral_norm

__all__ = [
    'DenseTensor', 'Rank1Point', 'SpectralNormConfig', 'spectral_norm',
    'OdecoTensor', 'SingularTuple', 'enumerate_tuples', 'random_odeco', 'to_dense',
    'IterationConfig', 'decompose_odeco', 'find_tuple', 'hosvd',
    'constants', 'match_tuples', 'verify_bounds',
]
