import pytest

from digestsim import data as dt
from digestsim import objectives as obj
from digestsim import topology as tp


@pytest.fixture(scope="session")
def small_blobs() -> dt.Dataset:
    return dt.generate_blobs(2, 30, 3, 1.0, 9)


@pytest.fixture(scope="session")
def path3() -> tp.Graph:
    return tp.Graph(3, ((0, 1), (1, 2)), (1.0, 1.0))


def make_logistic(dataset: dt.Dataset, v_count: int, seed: int = 2,
                  lam: float | None = None) -> obj.LogisticTask:
    part = dt.partition_iid_balanced(dataset, v_count, seed)
    return obj.LogisticTask(dataset, part, lam=lam)


def random_connected(v_count: int, p: float, seed: int,
                     delay: tuple[float, float] = (0.0, 0.0)) -> tp.Graph:
    g = tp.generate_erdos_renyi(v_count, p, seed)
    return tp.assign_delays(g, delay, seed)
