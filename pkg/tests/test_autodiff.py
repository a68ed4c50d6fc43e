"""Finite-difference verification of every differentiable primitive.

Central differences over the real and imaginary coordinates are the
oracle: for trusted step h=1e-5 the analytic adjoint of each primitive
must match to relative error < 1e-4.  Losses are formed by probing the
op output with fixed random vectors so every output coordinate
contributes to the scalar.
"""

import numpy as np
import pytest

from entrank import autodiff as ad
from entrank.linalg import DegenerateStateError, DimensionMismatchError

H = 1e-5
RTOL = 1e-4


def _coords(arr):
    """Float view of an array's independent real coordinates."""
    if np.issubdtype(arr.dtype, np.complexfloating):
        return arr.view(np.float64)
    return arr


def numeric_grad(f, x, h=H):
    """Central-difference gradient of scalar f at array x (packed)."""
    x = x.copy()
    g = np.zeros_like(x)
    xv, gv = _coords(x), _coords(g)
    for i in range(xv.size):
        orig = xv.flat[i]
        xv.flat[i] = orig + h
        fp = f(x)
        xv.flat[i] = orig - h
        fm = f(x)
        xv.flat[i] = orig
        gv.flat[i] = (fp - fm) / (2.0 * h)
    return g


def assert_grads_close(analytic, fd, label=""):
    na = np.linalg.norm(_coords(np.ascontiguousarray(analytic)))
    nf = np.linalg.norm(_coords(np.ascontiguousarray(fd)))
    denom = max(na, nf, 1e-8)
    err = np.linalg.norm(_coords(np.ascontiguousarray(analytic - fd))) / denom
    assert err < RTOL, f"{label}: relative error {err:.3e}"


def probe_loss(out, rng):
    """Reduce any node to a real scalar that mixes every coordinate."""
    shape = out.value.shape
    is_complex = np.issubdtype(out.value.dtype, np.complexfloating)
    if len(shape) == 2:
        rows = [ad.take_row(out, k) for k in range(shape[0])]
        losses = [probe_loss(r, rng) for r in rows]
        return losses[0] if len(losses) == 1 else ad.nsum(losses)
    if is_complex:
        re, im = ad.real_part(out), ad.imag_part(out)
        return ad.add(probe_loss(re, rng), probe_loss(im, rng))
    if shape == ():
        return ad.mul(out, np.asarray(rng.standard_normal()))
    return ad.rdot(out, rng.standard_normal(shape))


def check_op(build, arrays, seeds=range(3)):
    """FD-check `build(tape, *nodes) -> node` against every input."""
    for seed in seeds:
        rng = np.random.default_rng(seed)
        inputs = [a(rng) for a in arrays]
        probe_rng = np.random.default_rng(seed + 1000)

        tape = ad.Tape()
        nodes = [tape.param(x) for x in inputs]
        loss = probe_loss(build(tape, *nodes), probe_rng)
        grads = tape.backward(loss)

        for k, x in enumerate(inputs):
            def f(xk, k=k):
                t = ad.Tape()
                ns = [
                    t.param(xk if j == k else inputs[j])
                    for j in range(len(inputs))
                ]
                out = build(t, *ns)
                return float(probe_loss(out, np.random.default_rng(seed + 1000)).value)

            assert_grads_close(
                grads[nodes[k]], numeric_grad(f, x), f"input {k} seed {seed}"
            )


def cvec(n):
    return lambda rng: rng.standard_normal(n) + 1j * rng.standard_normal(n)


def rvec(n):
    return lambda rng: rng.standard_normal(n)


def cmat(r, c):
    return lambda rng: rng.standard_normal((r, c)) + 1j * rng.standard_normal((r, c))


def rscalar(lo=0.2, hi=1.5):
    return lambda rng: np.asarray(rng.uniform(lo, hi))


class TestElementwise:
    def test_add_complex(self):
        check_op(lambda t, a, b: ad.add(a, b), [cvec(4), cvec(4)])

    def test_add_scalar_constant(self):
        check_op(lambda t, a: ad.add(a, np.asarray(0.1)), [rscalar()])

    def test_sub(self):
        check_op(lambda t, a, b: ad.sub(a, b), [cvec(5), cvec(5)])
        check_op(lambda t, a, b: ad.sub(a, b), [rvec(5), rvec(5)])

    def test_neg(self):
        check_op(lambda t, a: ad.neg(a), [cvec(4)])

    def test_mul(self):
        check_op(lambda t, a, b: ad.mul(a, b), [cvec(4), cvec(4)])
        check_op(lambda t, a, b: ad.mul(a, b), [rvec(4), rvec(4)])

    def test_mul_rejects_mixed_kinds(self):
        with pytest.raises(DimensionMismatchError):
            ad.mul(np.ones(3), np.ones(3) + 0j)

    def test_scale(self):
        check_op(lambda t, v, s: ad.scale(v, s), [cvec(4), rscalar()])
        check_op(lambda t, v, s: ad.scale(v, s), [rvec(6), rscalar()])

    def test_scale_by_plain_float(self):
        check_op(lambda t, v: ad.scale(v, 0.25), [cvec(3)])


class TestLinear:
    def test_matvec(self):
        check_op(lambda t, m, v: ad.matvec(m, v), [cmat(3, 4), cvec(4)])

    def test_matvec_shape_check(self):
        with pytest.raises(DimensionMismatchError):
            ad.matvec(np.ones((2, 3)) + 0j, np.ones(2) + 0j)

    def test_kron(self):
        check_op(lambda t, a, b: ad.kron(a, b), [cvec(3), cvec(4)])

    def test_kron_element_order_exact(self):
        # Rational inputs: the product state must equal the elementwise
        # products bit for bit, in slowest-first order.
        a = np.array([0.5 + 0.25j, -0.75 + 1.0j])
        b = np.array([0.125 - 0.5j, 2.0 + 0.0j])
        out = ad.kron(a, b)
        expected = np.array([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
        assert np.array_equal(out, expected)

    def test_take_row(self):
        check_op(lambda t, m: ad.take_row(m, 1), [cmat(4, 3)])

    def test_take_same_row_twice_accumulates(self):
        check_op(
            lambda t, m: ad.inner(ad.take_row(m, 2), ad.take_row(m, 2)),
            [cmat(4, 3)],
        )

    def test_stack_rows(self):
        check_op(
            lambda t, a, b, c: ad.stack_rows([a, b, c]),
            [cvec(3), cvec(3), cvec(3)],
        )

    def test_concat(self):
        check_op(lambda t, a, b: ad.concat([a, b]), [rvec(3), rvec(5)])


class TestComplexStructure:
    def test_conjugate(self):
        check_op(lambda t, z: ad.conjugate(z), [cvec(5)])

    def test_real_imag(self):
        check_op(lambda t, z: ad.real_part(z), [cvec(5)])
        check_op(lambda t, z: ad.imag_part(z), [cvec(5)])

    def test_abs2(self):
        check_op(lambda t, z: ad.abs2(z), [cvec(5)])
        check_op(lambda t, z: ad.abs2(z), [rvec(5)])

    def test_abs2_scalar_worked_example(self):
        # d|x + iy|^2 = (2x, 2y): packed gradient is exactly 2z.
        z = np.asarray(0.3 - 0.7j)
        tape = ad.Tape()
        node = tape.param(z)
        loss = ad.abs2(node)
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[node], 2.0 * z, rtol=1e-12)

    def test_inner(self):
        check_op(lambda t, a, b: ad.inner(a, b), [cvec(4), cvec(4)])

    def test_inner_conjugate_linearity(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        np.testing.assert_allclose(ad.inner(a, b), np.conj(ad.inner(b, a)))

    def test_polar(self):
        check_op(lambda t, r, p: ad.polar(r, p), [rvec(5), rvec(5)])

    def test_l2_normalize(self):
        check_op(lambda t, v: ad.l2_normalize(v), [cvec(5)])
        check_op(lambda t, v: ad.l2_normalize(v), [rvec(5)])

    def test_l2_normalize_zero_vector_raises(self):
        with pytest.raises(DegenerateStateError):
            ad.l2_normalize(np.zeros(4, dtype=np.complex128))


class TestRealOps:
    def test_rdot(self):
        check_op(lambda t, a, b: ad.rdot(a, b), [rvec(6), rvec(6)])

    def test_sqrt(self):
        check_op(lambda t, x: ad.sqrt(x), [rscalar(0.5, 2.0)])

    def test_relu(self):
        check_op(
            lambda t, x: ad.relu(x),
            [lambda rng: rng.standard_normal(8) + 0.3],
        )

    def test_relu_inactive_side_has_zero_grad(self):
        tape = ad.Tape()
        x = tape.param(np.asarray(-0.5))
        grads = tape.backward(ad.relu(x))
        assert grads[x] == 0.0

    def test_divide(self):
        check_op(
            lambda t, a, b: ad.divide(a, b), [rscalar(), rscalar(0.5, 2.0)]
        )

    def test_nsum(self):
        check_op(
            lambda t, a, b, c: ad.nsum([a, b, c]),
            [rvec(4), rvec(4), rvec(4)],
        )

    def test_max_over_rows(self):
        check_op(lambda t, m: ad.max_over_rows(m), [lambda rng: rng.standard_normal((5, 4))])

    def test_max_over_rows_tie_goes_to_first(self):
        m = np.array([[1.0, 0.0], [1.0, 2.0]])
        tape = ad.Tape()
        node = tape.param(m)
        out = ad.max_over_rows(node)
        loss = ad.rdot(out, np.array([1.0, 1.0]))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads[node], [[1.0, 0.0], [0.0, 1.0]])


class TestTape:
    def test_unused_param_gets_zero_gradient(self):
        tape = ad.Tape()
        used = tape.param(np.ones(3))
        unused = tape.param(np.ones(4) + 1j)
        loss = ad.rdot(used, used)
        grads = tape.backward(loss)
        assert grads[unused].shape == (4,)
        assert grads[unused].dtype == np.complex128
        np.testing.assert_array_equal(grads[unused], 0)

    def test_loss_must_be_real_scalar(self):
        tape = ad.Tape()
        v = tape.param(np.ones(3))
        with pytest.raises(ValueError):
            tape.backward(ad.scale(v, 2.0))
        z = tape.param(np.asarray(1.0 + 0j))
        with pytest.raises(ValueError):
            tape.backward(ad.mul(z, z))

    def test_cross_tape_mixing_raises(self):
        t1, t2 = ad.Tape(), ad.Tape()
        a = t1.param(np.ones(3))
        b = t2.param(np.ones(3))
        with pytest.raises(ValueError):
            ad.rdot(a, b)

    def test_records_are_topologically_ordered(self):
        rng = np.random.default_rng(0)
        tape = ad.Tape()
        m = tape.param(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        v = tape.param(rng.standard_normal(3) + 1j * rng.standard_normal(3))
        w = ad.l2_normalize(ad.matvec(m, v))
        p = ad.abs2(ad.inner(w, ad.matvec(m, ad.conjugate(v))))
        tape.backward(ad.real_part(p) if p.dtype == np.complex128 else p)
        seen = set(id(n) for n in (m, v))
        for out, pairs in tape._records:
            for parent, _ in pairs:
                assert id(parent) in seen, "parent created after child"
            seen.add(id(out))

    def test_fanout_accumulates(self):
        # v feeds two branches; gradient must be the sum of both.
        rng = np.random.default_rng(1)
        x = rng.standard_normal(4)
        tape = ad.Tape()
        v = tape.param(x)
        loss = ad.add(ad.rdot(v, v), ad.rdot(v, np.ones(4)))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[v], 2 * x + 1.0, rtol=1e-12)

    def test_untraced_fast_path_matches_traced(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        plain = ad.abs2(ad.matvec(m, ad.l2_normalize(v)))
        tape = ad.Tape()
        traced = ad.abs2(ad.matvec(tape.param(m), ad.l2_normalize(tape.param(v))))
        assert not isinstance(plain, ad.Node)
        np.testing.assert_array_equal(plain, traced.value)
