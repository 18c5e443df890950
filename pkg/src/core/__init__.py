"""
Core components for sparse approximation of 3D images.

Separable dictionaries, the greedy pursuit engines, the CDF 9/7 wavelet,
block partitioning, metrics, file formats and result export.
"""

from core.approximator import (
    ApproximationReport, QualityTarget, approximate_image, make_fixture, threshold_wavelet,
)
from core.dictionary import Dictionary1D, SeparableDictionary3, assemble, build_named
from core.exporter import ResultExporter
from core.partition import PartitionSpec, partition
from core.pursuit import AtomicDecomposition, AtomIndex, PursuitConfig, mp3d, omp3d, spmp3d
from core.tensor import Block3, Image3

__all__ = [
    'ApproximationReport', 'QualityTarget', 'approximate_image', 'make_fixture', 'threshold_wavelet',
    'Dictionary1D', 'SeparableDictionary3', 'assemble', 'build_named',
    'ResultExporter',
    'PartitionSpec', 'partition',
    'AtomicDecomposition', 'AtomIndex', 'PursuitConfig', 'mp3d', 'omp3d', 'spmp3d',
    'Block3', 'Image3',
]
