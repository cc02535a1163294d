from importlib import resources

import numpy as np
import pytest

from semiflat.atlas import Atlas, Box, Chart
from semiflat.config import load_config
from semiflat.dsl import parse_expr
from semiflat.locus import build_patch, explicit_field
from semiflat.sections import RationalAffineSubspace

ACCEPTANCE_LINES: list[str] = []

QUAD2 = "(x1^2 + x2^2)/2"
LSE2 = "(x1^2 + x2^2)/2 + 0.1*log(exp(x1) + exp(x2))"


def config_path(name: str) -> str:
    return str(resources.files("semiflat") / "configs" / name)


def chart(src: str, box, cid: str = "U") -> Chart:
    box = Box.from_pairs(box)
    return Chart(cid, box, parse_expr(src, [f"x{i + 1}" for i in range(box.dim)]))


def subspace(Xi, Zeta, a) -> RationalAffineSubspace:
    m = len(a)
    Xi = np.array(Xi, dtype=np.int64).reshape(m, -1)
    Zeta = np.array(Zeta, dtype=np.int64).reshape(m, m - Xi.shape[1])
    return RationalAffineSubspace(Xi, Zeta, np.array(a, dtype=float))


def u_expr(src: str, k: int):
    return parse_expr(src, [f"u{i + 1}" for i in range(k)])


def random_explicit(patch, rng):
    """Polynomial field with random coefficients, generally neither gradient nor tangent."""
    k, m = patch.k, patch.m
    us = [f"u{i + 1}" for i in range(k)]
    comps = []
    for _ in range(m):
        c = rng.uniform(-1, 1, 1 + 2 * k)
        terms = [f"({float(c[0])!r})"] + [f"({float(c[1 + i])!r})*{u}" for i, u in enumerate(us)]
        terms += [f"({float(c[1 + k + i])!r})*{u}^2*{us[-1 - i]}" for i, u in enumerate(us)]
        comps.append(u_expr(" + ".join(terms), k))
    return explicit_field(patch, comps)


@pytest.fixture
def cfg_path():
    return config_path


@pytest.fixture(scope="session")
def line_patch():
    """Quadratic potential, k = 1 line x2 = 0.5, u in [0.1, 0.9], 65 nodes."""
    ch = chart(QUAD2, [[-2, 2], [-2, 2]])
    return build_patch(ch, subspace([1, 0], [0, 1], [0, 0.5]), Box.from_pairs([[0.1, 0.9]]), 65)


@pytest.fixture(scope="session")
def lse_line_patch():
    ch = chart(LSE2, [[-2, 2], [-2, 2]])
    return build_patch(ch, subspace([1, 0], [0, 1], [0, 0.5]), Box.from_pairs([[0.1, 0.9]]), 65, x0=[0.2, 0.4])


@pytest.fixture(scope="session")
def plane_patch():
    """k = m = 2, quadratic potential, u in [-1, 1]^2."""
    ch = chart(QUAD2, [[-3, 3], [-3, 3]])
    S = subspace([[1, 0], [0, 1]], np.zeros((2, 0)), [0, 0])
    return build_patch(ch, S, Box.from_pairs([[-1, 1], [-1, 1]]), 17)


@pytest.fixture(scope="session")
def lse_plane_patch():
    ch = chart(LSE2, [[-3, 3], [-3, 3]])
    S = subspace([[1, 0], [0, 1]], np.zeros((2, 0)), [0.1, -0.2])
    return build_patch(ch, S, Box.from_pairs([[-0.8, 0.8], [-0.8, 0.8]]), 17)


@pytest.fixture(scope="session")
def slab_patch():
    """k = 2 inside m = 3 with a sheared frame."""
    cfg = load_config(config_path("slab_k2m3.cfg"))
    lo = cfg.locus
    return build_patch(cfg.atlas.chart(lo.chart), cfg.section[lo.chart], lo.u_box, lo.resolution)


@pytest.fixture
def quad_atlas():
    return Atlas.from_parts([chart(QUAD2, [[0.1, 0.9], [0.1, 0.9]])])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
