"""Random-case property suites shared by the unit tests and the acceptance gate.

Every suite returns ``{property: (cases, violations)}``.
"""
import math

import numpy as np

from certdyn.exact import (COMPOSITION_TOL, DIRAC_RESIDUAL_TOL, EXPECTATION_TOL, dirac_propagator,
                           dirac_residual, phase_min_distance, propagator, pure_trace_distance,
                           sandwich_difference, trace_bound_from_distance,
                           trace_bound_from_overlap)
from certdyn.hamiltonian import build_model, interaction_split
from certdyn.lattice import Lattice, geometry_report
from certdyn.linalg import random_state, random_unitary, trace_norm
from certdyn.lr_bounds import log_linear_gap, poly_exp_threshold


def _frobenius(A):
    return float(np.linalg.norm(A))


def _tally(out, name, ok):
    c, v = out.get(name, (0, 0))
    out[name] = (c + 1, v + (0 if ok else 1))


def unitary_triangle_suite(n_cases, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    norms = {"operator": None, "trace": trace_norm, "frobenius": _frobenius}
    for k in range(n_cases):
        d = int(rng.integers(2, 6))
        U1, U2 = random_unitary(d, rng), random_unitary(d, rng)
        if k % 2:
            # nearby pairs stress the small-difference regime
            W = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            V1 = np.linalg.qr(U1 + 1e-2 * W)[0]
            V2 = np.linalg.qr(U2 + 1e-2 * W.T)[0]
        else:
            V1, V2 = random_unitary(d, rng), random_unitary(d, rng)
        A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        name, norm = list(norms.items())[k % 3]
        lhs, rhs = sandwich_difference(U1, U2, V1, V2, A, norm)
        _tally(out, f"unitary_triangle_{name}", lhs <= rhs * (1 + 1e-12) + 1e-12)
    return out


def poly_exp_suite(n_cases, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for k in range(n_cases):
        n = 0.0 if k % 50 == 0 else float(rng.uniform(0, 12))
        a = float(np.exp(rng.uniform(math.log(1e-2), math.log(20))))
        x0 = poly_exp_threshold(n, a)
        x = x0 if k % 7 == 0 else x0 + float(rng.exponential(1 + x0))
        # log form avoids overflow for large x
        val = (n * math.log(x) if x > 0 else (0.0 if n == 0 else -math.inf)) - a * x
        _tally(out, "poly_exp", val <= 1e-12)
    return out


def log_linear_suite(n_cases, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    grid = np.exp(np.linspace(math.log(1e-8), math.log(1e8), n_cases // 2))
    xs = np.concatenate([grid, np.exp(rng.uniform(math.log(1e-8), math.log(1e8), n_cases - len(grid)))])
    for x in xs:
        g = log_linear_gap(float(x))
        _tally(out, "log_linear", g >= -1e-15)
        if abs(x - 2) > 1e-3:
            _tally(out, "log_linear_strict", g > 0)
    _tally(out, "log_linear_equality", abs(log_linear_gap(2.0)) <= 1e-15)
    return out


def state_distance_suite(n_cases, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    alphas = np.linspace(0, 2 * math.pi, 257)
    for k in range(n_cases):
        d = int(rng.integers(2, 9))
        psi = random_state(d, rng)
        if k % 2:
            phi = psi + float(rng.uniform(0, 1)) * random_state(d, rng)
            phi /= np.linalg.norm(phi)
        else:
            phi = random_state(d, rng)
            if k % 4 == 2:
                phi = phi * np.exp(1j * np.angle(np.vdot(phi, psi)))
        tr = pure_trace_distance(psi, phi)
        # independent dense trace norm
        dense = trace_norm(np.outer(psi, psi.conj()) - np.outer(phi, phi.conj()))
        _tally(out, "trace_distance_dense", abs(dense - tr) <= 1e-10)
        eps = float(np.linalg.norm(psi - phi))
        if eps <= math.sqrt(2):
            # squared forms: a square root turns 1e-16 roundoff into 1e-8
            _tally(out, "distance_to_trace", dense**2 <= trace_bound_from_distance(eps) ** 2 + 1e-12)
        defect = max(0.0, 1.0 - abs(np.vdot(psi, phi)))
        best = np.linalg.norm(psi[None, :] - np.exp(1j * alphas)[:, None] * phi[None, :], axis=1).min()
        exact = np.linalg.norm(psi - np.exp(1j * np.angle(np.vdot(phi, psi))) * phi)
        pm = phase_min_distance(defect)
        _tally(out, "phase_minimized", abs(exact - pm) <= 1e-7 and exact <= best + 1e-12)
        _tally(out, "overlap_to_trace", dense**2 <= trace_bound_from_overlap(min(defect, 1.0)) ** 2 + 1e-12)
    return out


def interaction_picture_suite(n_cases, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for k in range(n_cases):
        n = int(rng.integers(2, 5))
        H = build_model("ising_transverse", n, [float(rng.uniform(0.2, 1.5)), float(rng.uniform(0.2, 1.5))])
        F, G = interaction_split(H)
        r, s, t = (float(v) for v in rng.uniform(-1, 1, 3))
        res = dirac_propagator(H, F, G, r, t, s)
        UD = res["U_D"]
        ref = propagator(F, r, t) @ propagator(H, t, s) @ propagator(F, s, r)
        _tally(out, "dirac_product", np.max(np.abs(UD - ref)) <= COMPOSITION_TOL)
        psi_s = random_state(2**n, rng)
        psi_t = propagator(H, t, s) @ psi_s
        A = rng.normal(size=(2**n, 2**n))
        A = A + A.T
        AD = propagator(F, r, t) @ A @ propagator(F, t, r)
        psi_D = UD @ (propagator(F, r, s) @ psi_s)
        lhs = np.vdot(psi_D, AD @ psi_D).real
        rhs = np.vdot(psi_t, A @ psi_t).real
        _tally(out, "expectation_identity", abs(lhs - rhs) <= EXPECTATION_TOL * max(1.0, abs(rhs)))
        u = float(rng.uniform(-1, 1))
        comp = propagator(H, t, u) @ propagator(H, u, s)
        _tally(out, "composition", np.max(np.abs(comp - propagator(H, t, s))) <= COMPOSITION_TOL)
        if k % 5 == 0:
            _tally(out, "dirac_residual", dirac_residual(H, F, G, r, t, s) <= DIRAC_RESIDUAL_TOL)
    return out


def metric_suite(n_random, seed=0):
    """Metric-space lemmas over chains, a graph grid and two hypercubes."""
    lattices = [Lattice.chain(12), Lattice.grid((3, 4)), Lattice.hypercube(6, 2), Lattice.hypercube(4, 3)]
    out = {}
    for i, lat in enumerate(lattices):
        rep = geometry_report(lat, n_random=n_random, seed=seed + i, n_cube=n_random)
        for k, (c, v) in rep.items():
            c0, v0 = out.get(k, (0, 0))
            out[k] = (c0 + c, v0 + v)
    return out


def merge(*reports):
    out = {}
    for rep in reports:
        for k, (c, v) in rep.items():
            c0, v0 = out.get(k, (0, 0))
            out[k] = (c0 + c, v0 + v)
    return out


# Lieb-Robinson soundness sampling

def lr_configurations(n_configs, seed=0):
    """Yield ``(H, params, A, Y, R, t)`` with a non-trivial bound precondition.

    Chains ``n <= 10`` (three models) and a 2x4 graph grid, ``kappa = 0``.
    Every tenth configuration uses ``R = Lambda`` and every tenth ``t = 0``.
    """
    from certdyn.hamiltonian import structural_params
    from certdyn.linalg import random_hermitian
    from certdyn.lr_bounds import ceil_da

    rng = np.random.default_rng(seed)
    models = []
    for n in range(4, 11):
        for kind in ("heisenberg_chain", "ising_transverse", "ising_chain_zz"):
            models.append(build_model(kind, n, [1.0, 0.7]))
    models.append(build_model("heisenberg_grid", shape=(2, 4)))
    params = {id(H): structural_params(H, kappa=0) for H in models}
    made = 0
    while made < n_configs:
        H = models[int(rng.integers(len(models)))]
        p = params[id(H)]
        lat = H.lattice
        y0 = lat.sites[int(rng.integers(lat.n))]
        Y = frozenset({y0})
        if rng.random() < 0.4:
            nb = [s for s in lat.sites if lat.distance(y0, s) == 1]
            Y = Y | {nb[int(rng.integers(len(nb)))]}
        if made % 10 == 0:
            R = lat.all
        else:
            R = lat.ball(Y, float(rng.integers(2, 5))) | frozenset(
                s for s in lat.sites if rng.random() < 0.1)
        t = 0.0 if made % 10 == 5 else float(rng.uniform(0, 0.6))
        d = lat.distance_to_complement(Y, R) / p.a
        if not math.isinf(d) and not ceil_da(d) > 2 * p.kappa + 1:
            continue
        A = random_hermitian(2 ** len(Y), rng)
        A /= op_norm_safe(A)
        made += 1
        yield H, p, A, Y, R, t


def op_norm_safe(A):
    from certdyn.linalg import op_norm
    return max(op_norm(A), 1e-300)


def lr_soundness(n_configs, seed=0):
    from certdyn.lr_bounds import empirical_truncation_error
    out = {"violations": 0, "cases": 0, "trivial_cases": 0, "trivial_max": 0.0, "max_ratio": 0.0}
    for H, p, A, Y, R, t in lr_configurations(n_configs, seed):
        res = empirical_truncation_error(H, A, Y, R, t, params=p)
        out["cases"] += 1
        if R == H.lattice.all or t == 0:
            out["trivial_cases"] += 1
            out["trivial_max"] = max(out["trivial_max"], res["exact_error"])
        if res["bound"] is None or res["exact_error"] > res["bound"]:
            out["violations"] += 1
        elif res["bound"] > 0:
            out["max_ratio"] = max(out["max_ratio"], res["exact_error"] / res["bound"])
    return out


# certification instances

def product_multiplicities(block_dims):
    """Eigenvalue multiplicities of a sum of block projectors ``1 - |phi><phi|``."""
    poly = np.array([1], dtype=np.int64)
    for D in block_dims:
        poly = np.convolve(poly, np.array([1, D - 1], dtype=np.int64))
    return poly


def certification_instance(rng, n=None, t=None):
    """Random chain instance: product state, singleton partition, random ball regions."""
    from certdyn.certification import WitnessSpec, evolved_witness, random_product_vectors
    from certdyn.exact import product_state

    n = int(rng.integers(4, 7)) if n is None else n
    kind = ("heisenberg_chain", "ising_transverse")[int(rng.integers(2))]
    H = build_model(kind, n, [1.0, float(rng.uniform(0.3, 1.0))])
    sites = H.lattice.sites
    vectors = random_product_vectors(sites, rng)
    partition = [frozenset([s]) for s in sites]
    regions = [H.lattice.ball(Y, float(rng.integers(1, 4))) for Y in partition]
    t = float(rng.uniform(0, 0.5)) if t is None else t
    spec = WitnessSpec(vectors, partition, regions, t)
    W = evolved_witness(spec, H)
    psi0 = product_state([vectors[s] for s in sites])
    psi_t = propagator(H, t, 0.0) @ psi0
    return H, spec, W, psi_t


def nearby_density(psi, gamma, rng):
    """Density matrix within trace distance ``gamma`` of ``|psi><psi|``."""
    D = len(psi)
    P = np.outer(psi, psi.conj())
    if rng.random() < 0.5:
        X = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
        sigma = X @ X.conj().T
        sigma /= np.trace(sigma).real
        p = float(rng.uniform(0, gamma / 2))
        return (1 - p) * P + p * sigma
    # pure state at trace distance exactly ``gamma * u``
    u = float(rng.uniform(0, 1))
    perp = random_state(D, rng)
    perp -= np.vdot(psi, perp) * psi
    perp /= np.linalg.norm(perp)
    theta = math.asin(min(1.0, gamma * u / 2))
    phi = math.cos(theta) * psi + math.sin(theta) * perp
    return np.outer(phi, phi.conj())


# tensor networks

def graph_family(kind, n):
    from certdyn.tensor_network import PepsGraph
    v = tuple(range(1, n + 1))
    if kind == "path":
        edges = [(i, i + 1) for i in range(1, n)]
    elif kind == "star":
        edges = [(1, i) for i in range(2, n + 1)]
    elif kind == "cycle":
        edges = [(i, i + 1) for i in range(1, n)] + [(n, 1)]
    elif kind == "grid":
        # 2 x (n // 2) ladder, row-major ids
        w = n // 2
        v = tuple(range(1, 2 * w + 1))
        edges = [(i, i + 1) for r in (0, w) for i in range(r + 1, r + w)] + [(i, i + w) for i in range(1, w + 1)]
    else:
        raise ValueError(kind)
    return PepsGraph.from_edges(v, edges)


def random_complex(shape, rng):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def peps_round_trip(n_cases, seed=0):
    """Relative reconstruction error of random tensors on random graphs."""
    from certdyn.tensor_network import contract, tensor_to_peps
    rng = np.random.default_rng(seed)
    kinds = ("path", "star", "cycle", "grid")
    errors = []
    for k in range(n_cases):
        kind = kinds[k % 4]
        g = graph_family(kind, int(rng.integers(3, 7)) if kind != "grid" else 2 * int(rng.integers(2, 4)))
        shape = tuple(int(rng.integers(2, 4)) for _ in g.vertices)
        t = random_complex(shape, rng)
        p = tensor_to_peps(t, g)
        method = ("einsum", "sequential")[k % 2]
        errors.append((kind, float(np.linalg.norm(contract(p, method) - t) / np.linalg.norm(t))))
    return errors


def random_pepo(graph, rng, d_max=3, D_max=3):
    from certdyn.tensor_network import Pepo
    g = graph.with_dims({e: int(rng.integers(1, D_max + 1)) for e in graph.edges})
    dims = {x: int(rng.integers(2, d_max + 1)) for x in g.vertices}
    return g, dims, lambda dd: Pepo(g, {x: random_complex((dd[x], dd[x]) + g.bond_shape(x), rng)
                                        for x in g.vertices})


def pepo_products(n_cases, seed=0):
    from certdyn.tensor_network import contract, pepo_product
    rng = np.random.default_rng(seed)
    kinds = ("path", "star", "cycle", "grid")
    out = []
    for k in range(n_cases):
        kind = kinds[k % 4]
        base = graph_family(kind, int(rng.integers(3, 5)) if kind != "grid" else 4)
        g, dims, make = random_pepo(base, rng)
        A = make(dims)
        gB = base.with_dims({e: int(rng.integers(1, 4)) for e in base.edges})
        from certdyn.tensor_network import Pepo
        B = Pepo(gB, {x: random_complex((dims[x], dims[x]) + gB.bond_shape(x), rng) for x in gB.vertices})
        P = pepo_product(A, B)
        ref = contract(A) @ contract(B)
        err = float(np.linalg.norm(contract(P) - ref) / np.linalg.norm(ref))
        dims_ok = all(P.graph.D(*e) == g.D(*e) * gB.D(*e) for e in base.edges)
        out.append((kind, err, dims_ok))
    return out


def random_circuit(graph, rng, n_gates, d=2):
    from certdyn.linalg import random_unitary
    edges = graph.edges
    circ = []
    for _ in range(n_gates):
        if rng.random() < 0.25:
            circ.append(((graph.vertices[int(rng.integers(len(graph.vertices)))],),
                         random_unitary(d, rng)))
        else:
            e = edges[int(rng.integers(len(edges)))]
            circ.append((e, random_unitary(d * d, rng)))
    return circ


def circuit_bounds(n_cases, seed=0):
    from certdyn.tensor_network import circuit_to_pepo_bound
    rng = np.random.default_rng(seed)
    kinds = ("path", "star", "cycle", "grid")
    out = []
    for k in range(n_cases):
        g = graph_family(kinds[k % 4], 4)
        circ = random_circuit(g, rng, int(rng.integers(1, 6)))
        res = circuit_to_pepo_bound(circ, g, 2, materialize=True)
        glob = all(D <= res["global_bound"] for D in res["materialized_dims"].values())
        out.append((res["within_bound"] and glob, res["dense_error"]))
    return out
