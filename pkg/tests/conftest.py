import numpy as np
import pytest

from tools.samples import LabeledSample
from tools.synthetic import SyntheticSpec, generate_spd_dataset, random_spd, random_unit_sym


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def spd_pair(rng):
    return random_spd(5, rng), random_spd(5, rng)


@pytest.fixture
def small_dataset():
    """2 classes × 8 amostras, 6×6 com bloco discriminativo 3×3"""
    spec = SyntheticSpec(n_classes=2, per_class=8, dim=6, block_dim=3, noise=0.2, seed=3, center_seed=3)
    return generate_spd_dataset(spec)


@pytest.fixture
def separable_samples():
    """Duas classes em torno de I e 4I (3×3), 40 por classe, treino e teste"""
    rng = np.random.default_rng(7)

    def draw(scale, label, n):
        out = []
        for _ in range(n):
            S = 0.1 * random_unit_sym(3, rng)
            w, V = np.linalg.eigh(S)
            out.append(LabeledSample(scale * (V * np.exp(w)) @ V.T, label))
        return out

    train = draw(1.0, 0, 40) + draw(4.0, 1, 40)
    test = draw(1.0, 0, 40) + draw(4.0, 1, 40)
    return train, test
