import numpy as np

from cpsample_lab.datasets import gaussmixture, generate_dataset
from cpsample_lab.libdataset import DatasetSpec


def test_mean_is_near_the_origin():
    n = 4096
    gen = gaussmixture.Generator()
    train, _ = gen.generate(n, 0, seed=1)
    # per-coordinate variance of the ring mixture
    sigma = np.sqrt(gen.radius**2 / 2 + gen.std**2)
    assert np.all(np.abs(train.data.mean(axis=0)) < 4 * sigma / np.sqrt(n))


def test_points_cluster_on_the_ring():
    train, _ = gaussmixture.Generator().generate(2000, 0, seed=2)
    r = np.linalg.norm(train.data, axis=1)
    assert abs(np.median(r) - 2.0) < 0.05


def test_config_overrides():
    gen = gaussmixture.Generator({"modes": "4", "radius": "5", "std": "0.01"})
    x = gen.draw(200, np.random.default_rng(3))
    d = np.linalg.norm(x[:, None, :] - gen.centers[None, :, :], axis=-1).min(axis=1)
    assert gen.centers.shape == (4, 2)
    assert d.max() < 0.1


def test_spec_params_reach_the_generator():
    train, _ = generate_dataset(DatasetSpec("gauss-mixture-2d", 50, 0, 4, {"radius": 10.0}))
    assert np.linalg.norm(train.data, axis=1).min() > 8.0
