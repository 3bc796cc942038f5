from cpsample_lab.libdataset.generator import DatasetSpec, Generator

__all__ = ["DatasetSpec", "Generator"]
