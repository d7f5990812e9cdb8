import numpy as np
import pytest

from ganreg import model as M


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return M.ModelConfig(
        vocab_size=6, embed_dim=4, doc_len=5, gen_hidden=4, noise_dim=3,
        channels=4, kernel_size=3, n_blocks=1, temperature=1.0, conditional=True,
    )
