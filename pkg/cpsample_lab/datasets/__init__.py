from cpsample_lab.common import ConfigException
from cpsample_lab.datasets import gaussmixture, tinyshapes

GENERATORS = {
    gaussmixture.Generator.GENERATOR_NAME: gaussmixture.Generator,
    tinyshapes.Generator.GENERATOR_NAME: tinyshapes.Generator,
}


def generate_dataset(spec):
    """(train, test) Tensors for a DatasetSpec. Same spec, same bytes."""
    if spec.kind not in GENERATORS:
        known = ", ".join(sorted(GENERATORS))
        raise ConfigException("dataset.kind", f"unknown dataset kind '{spec.kind}' ({known})")
    return GENERATORS[spec.kind](spec.params).generate(spec.n, spec.n_test, spec.seed)


def data_dim(kind):
    return GENERATORS[kind].DATA_DIM
