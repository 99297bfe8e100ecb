from rcsopt.datasets.container import (
    Dataset,
    is_container,
    read_dataset,
    sidecar_path,
    write_dataset,
)
from rcsopt.datasets.libsvm import read_libsvm
from rcsopt.datasets.pgm import read_pgm, write_pgm
from rcsopt.datasets.synthetic import (
    HadamardDesign,
    MEstimatorGenConfig,
    PrGenConfig,
    SvmGenConfig,
    generate_mestimator_data,
    generate_pr_data,
    generate_pr_instance,
    generate_svm_data,
    outlier_count,
)


def load_dataset(path, family=None) -> Dataset:
    """Reads a container, or a libsvm text file when the magic bytes are absent"""
    if is_container(path):
        dataset = read_dataset(path)
        dataset.family = family or dataset.family
        return dataset
    A, b = read_libsvm(path)
    return Dataset(family=family or "svm", A=A, b=b, config={"source": str(path)})


__all__ = [
    "Dataset",
    "HadamardDesign",
    "MEstimatorGenConfig",
    "PrGenConfig",
    "SvmGenConfig",
    "generate_mestimator_data",
    "generate_pr_data",
    "generate_pr_instance",
    "generate_svm_data",
    "is_container",
    "load_dataset",
    "outlier_count",
    "read_dataset",
    "read_libsvm",
    "read_pgm",
    "sidecar_path",
    "write_dataset",
    "write_pgm",
]
