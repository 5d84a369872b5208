import json

import numpy as np
import pytest

from drchain.config import fixture_path, load_config


def load(name):
    return load_config(fixture_path(name))


@pytest.fixture(scope="session")
def five_nom():
    return load("five_mass_nominal")


@pytest.fixture(scope="session")
def five_opt():
    return load("five_mass_optimized")


@pytest.fixture(scope="session")
def exp_nom():
    return load("experimental_nominal")


@pytest.fixture(scope="session")
def exp_opt():
    return load("experimental_optimized")


@pytest.fixture(scope="session", params=["five_mass_nominal", "five_mass_optimized", "experimental_nominal", "experimental_optimized"])
def any_fixture(request):
    return load(request.param)


def raw_fixture(name):
    return json.loads(fixture_path(name).read_text())


def closed_loop_matrix(masses, ks, cs, p, m_a, c_a, k_a, g, tau, lam):
    """Characteristic matrix of chain + absorber + delayed feedback at complex ``lam``.

    Unknowns ``[x_1..x_d, x_a]``; written mass by mass from force balances, with the
    absorber-link force ``f_a = u + (k_a + lam c_a)(x_p - x_a)`` pulling the absorber
    and pushing back on mass ``p``; ``u = g e^{-lam tau} x_a``.
    """
    d = len(masses)
    A = np.zeros((d + 1, d + 1), complex)
    z = lambda k, c: k + lam * c
    for i in range(d):
        A[i, i] += masses[i] * lam**2
        # link i (to the left) and link i+1 (to the right)
        for link, other in ((i, i - 1), (i + 1, i + 1)):
            zz = z(ks[link], cs[link])
            A[i, i] += zz
            if 0 <= other < d:
                A[i, other] -= zz
    ia = d
    za = z(k_a, c_a)
    u_coef = g * np.exp(-lam * tau)
    # absorber: m_a lam^2 x_a = za (x_p - x_a) + u
    A[ia, ia] += m_a * lam**2 + za - u_coef
    A[ia, p - 1] -= za
    # mass p receives -f_a
    A[p - 1, p - 1] += za
    A[p - 1, ia] += -za + u_coef
    return A


def closed_loop_phasor(masses, ks, cs, p, m_a, c_a, k_a, g, tau, omega, fd):
    """Brute-force steady-state phasors ``(x, x_a)`` under ``f_d cos(omega t)`` at mass ``d``."""
    A = closed_loop_matrix(masses, ks, cs, p, m_a, c_a, k_a, g, tau, 1j * omega)
    rhs = np.zeros(len(masses) + 1, complex)
    rhs[len(masses) - 1] = fd
    sol = np.linalg.solve(A, rhs)
    return sol[:-1], sol[-1]


def char_matrix_of(cfg, g, tau, lam):
    m, a = cfg.model, cfg.absorber
    return closed_loop_matrix(m.masses, m.stiffnesses, m.dampings, m.p, a.m_a, a.c_a, a.k_a, g, tau, lam)


def count_roots(fn, re_lo, re_hi, im_lo, im_hi, n=40000):
    """Zeros of the entire function ``fn`` inside a rectangle by the argument principle."""
    edges = [
        re_lo + 1j * im_lo + (re_hi - re_lo) * np.linspace(0, 1, n, endpoint=False),
        re_hi + 1j * (im_lo + (im_hi - im_lo) * np.linspace(0, 1, n, endpoint=False)),
        re_hi + 1j * im_hi - (re_hi - re_lo) * np.linspace(0, 1, n, endpoint=False),
        re_lo + 1j * (im_hi - (im_hi - im_lo) * np.linspace(0, 1, n, endpoint=False)),
    ]
    z = np.concatenate(edges + [[re_lo + 1j * im_lo]])
    vals = np.array([fn(zz) for zz in z])
    dphi = np.angle(vals[1:] / vals[:-1])
    return int(round(dphi.sum() / (2 * np.pi)))


def closed_loop_of(cfg, g, tau):
    m, a, e = cfg.model, cfg.absorber, cfg.excitation
    return closed_loop_phasor(m.masses, m.stiffnesses, m.dampings, m.p, a.m_a, a.c_a, a.k_a, g, tau, e.omega, e.amplitude)


def link_max_energy(ks, x):
    """Peak of 1/2 k dx(t)^2 over a period: a harmonic dx peaks at its modulus."""
    dx = np.diff(np.concatenate([[0.0], x, [0.0]]))
    return 0.5 * np.asarray(ks) * np.abs(dx) ** 2
