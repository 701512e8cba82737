import numpy as np
import pytest

from fbsc.probcore import JointPmf, fig4_pair_source


@pytest.fixture(scope="session")
def fig4():
    return fig4_pair_source()


@pytest.fixture(scope="session")
def bern13():
    return JointPmf.from_masses((2,), ["2/3", "1/3"])


@pytest.fixture(scope="session")
def bern11():
    return JointPmf.bernoulli(0.11)


@pytest.fixture(scope="session")
def uniform_binary():
    return JointPmf.from_masses((2,), ["1/2", "1/2"])


@pytest.fixture(scope="session")
def hidden_variable_pair():
    # P_S = Bernoulli(1/2), X_i = S through a binary symmetric 0.1 channel
    return JointPmf.from_masses((2, 2), ["41/100", "9/100", "9/100", "41/100"])


def brute_force_strings(pmf: JointPmf, n: int):
    """(probabilities, information values) over every length-n string."""
    import itertools
    import math

    outs = pmf.outcomes()
    mass = pmf.mass
    probs = []
    for seq in itertools.product(range(len(outs)), repeat=n):
        probs.append(math.prod(mass[i] for i in seq))
    probs = np.array(probs)
    with np.errstate(divide="ignore"):
        return probs, -np.log(probs)
