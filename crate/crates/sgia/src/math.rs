//! Small rotation/linear-algebra helpers shared across modules, together with
//! the analytic Jacobians the backward passes need.

use nalgebra::{Matrix3, Vector3, Vector4};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;
pub type V4 = Vector4<f64>;

/// Cross-product matrix `[w]x` such that `[w]x v = w.cross(v)`.
pub fn skew(w: &V3) -> M3 {
    M3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`] on antisymmetric matrices.
pub fn vee(m: &M3) -> V3 {
    V3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rotation matrix from an unnormalized quaternion `(w, x, y, z)`.
///
/// The quaternion is normalized internally, so the map is scale invariant.
pub fn quat_to_matrix(q: &V4) -> M3 {
    let n = q.norm();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    M3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Jacobian of [`quat_to_matrix`] w.r.t. the *normalized* quaternion entries.
fn dmatrix_dunit_quat(q: &V4) -> [M3; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = M3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = M3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = M3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = M3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    [dw, dx, dy, dz]
}

/// Pull a gradient w.r.t. the rotation matrix back to the raw (unnormalized)
/// quaternion, including the normalization Jacobian.
pub fn quat_backward(q: &V4, grad_r: &M3) -> V4 {
    let n = q.norm();
    let qu = q / n;
    let dms = dmatrix_dunit_quat(&qu);
    let mut g_unit = V4::zeros();
    for i in 0..4 {
        g_unit[i] = dms[i].component_mul(grad_r).sum();
    }
    // d(q/|q|)/dq = (I - qu qu^T)/|q|
    (g_unit - qu * qu.dot(&g_unit)) / n
}

/// Quaternion `(w, xyz)` of the rotation `exp([omega]x)`.
pub fn axis_angle_to_quat(omega: &V3) -> V4 {
    let theta = omega.norm();
    let (w, k) = if theta < 1e-8 {
        // series: cos(t/2) ~ 1 - t^2/8, sin(t/2)/t ~ 1/2 - t^2/48
        (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
    } else {
        ((theta / 2.0).cos(), (theta / 2.0).sin() / theta)
    };
    V4::new(w, k * omega.x, k * omega.y, k * omega.z)
}

/// Jacobian of [`axis_angle_to_quat`]: rows are quaternion components,
/// columns the axis-angle components.
pub fn axis_angle_to_quat_jacobian(omega: &V3) -> [V3; 4] {
    let theta = omega.norm();
    if theta < 1e-6 {
        let dw = -omega / 4.0;
        return [
            dw,
            V3::new(0.5, 0.0, 0.0),
            V3::new(0.0, 0.5, 0.0),
            V3::new(0.0, 0.0, 0.5),
        ];
    }
    let half = theta / 2.0;
    let (s, c) = (half.sin(), half.cos());
    let axis = omega / theta;
    let dw = axis * (-s / 2.0);
    let k = s / theta;
    let dk_dtheta = c / (2.0 * theta) - s / (theta * theta);
    // d(k * omega_i)/d omega_j = k delta_ij + dk_dtheta axis_j omega_i
    let mut rows = [V3::zeros(); 3];
    for i in 0..3 {
        let mut r = V3::zeros();
        for j in 0..3 {
            r[j] = if i == j { k } else { 0.0 };
            r[j] += dk_dtheta * axis[j] * omega[i];
        }
        rows[i] = r;
    }
    [dw, rows[0], rows[1], rows[2]]
}

/// Rotation matrix of `exp([omega]x)`.
pub fn axis_angle_to_matrix(omega: &V3) -> M3 {
    quat_to_matrix(&axis_angle_to_quat(omega))
}

/// Pull a rotation-matrix gradient back to the axis-angle vector.
pub fn axis_angle_backward(omega: &V3, grad_r: &M3) -> V3 {
    let q = axis_angle_to_quat(omega);
    let gq = quat_backward(&q, grad_r);
    let jq = axis_angle_to_quat_jacobian(omega);
    let mut g = V3::zeros();
    for i in 0..4 {
        g += jq[i] * gq[i];
    }
    g
}

/// Closest rotation to `m` in the Frobenius sense (polar factor with
/// determinant +1).
pub fn polar_rotation(m: &M3) -> M3 {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let mut u2 = u;
        u2.set_column(2, &(-u.column(2)));
        r = u2 * vt;
    }
    r
}

/// Adjoint of [`polar_rotation`]: given `dL/dR`, returns `dL/dM`.
///
/// With `M = R S` (`S` symmetric positive), the differential satisfies
/// `dR = R [omega]x` where `((tr S) I - S) omega = vee(R^T dM - dM^T R)`.
pub fn polar_backward(m: &M3, r: &M3, grad_r: &M3) -> M3 {
    let s = r.transpose() * m;
    let s = (s + s.transpose()) * 0.5;
    let c = M3::identity() * s.trace() - s;
    let rhs = vee(&(r.transpose() * grad_r - grad_r.transpose() * r));
    let h = c
        .try_inverse()
        .map(|ci| ci * rhs)
        .unwrap_or_else(V3::zeros);
    r * skew(&h)
}

/// Complete a unit vector `n` to an orthonormal frame; returns `(t_u, t_v)`
/// with `t_u x t_v = n`.
pub fn orthonormal_basis(n: &V3) -> (V3, V3) {
    let a = if n.x.abs() < 0.9 {
        V3::new(1.0, 0.0, 0.0)
    } else {
        V3::new(0.0, 1.0, 0.0)
    };
    let tu = n.cross(&a).normalize();
    let tv = n.cross(&tu);
    debug_assert!((tu.cross(&tv) - n).norm() < 1e-9);
    (tu, tv)
}

/// `ln(1 + e^x)` with overflow protection.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`] (the logistic function).
pub fn softplus_deriv(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Real spherical-harmonics basis (degree 2) at a unit direction, with the
/// DC basis fixed to 1 so the first coefficient is the mean value.
pub fn sh_basis(d: &V3) -> [f64; 9] {
    let (x, y, z) = (d.x, d.y, d.z);
    const C1: f64 = 0.4886025119029199;
    const C2: [f64; 5] = [
        1.0925484305920792,
        -1.0925484305920792,
        0.31539156525252005,
        -1.0925484305920792,
        0.5462742152960396,
    ];
    [
        1.0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * x * y,
        C2[1] * y * z,
        C2[2] * (2.0 * z * z - x * x - y * y),
        C2[3] * x * z,
        C2[4] * (x * x - y * y),
    ]
}

/// Basis values plus their gradients w.r.t. the (free) direction vector;
/// project the result with `(I - d d^T)/|d|` to respect unit length.
pub fn sh_basis_grad(d: &V3) -> ([f64; 9], [V3; 9]) {
    let (x, y, z) = (d.x, d.y, d.z);
    const C1: f64 = 0.4886025119029199;
    const C2: [f64; 5] = [
        1.0925484305920792,
        -1.0925484305920792,
        0.31539156525252005,
        -1.0925484305920792,
        0.5462742152960396,
    ];
    let b = sh_basis(d);
    let g = [
        V3::zeros(),
        V3::new(0.0, -C1, 0.0),
        V3::new(0.0, 0.0, C1),
        V3::new(-C1, 0.0, 0.0),
        V3::new(C2[0] * y, C2[0] * x, 0.0),
        V3::new(0.0, C2[1] * z, C2[1] * y),
        V3::new(-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z),
        V3::new(C2[3] * z, 0.0, C2[3] * x),
        V3::new(2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0),
    ];
    (b, g)
}

/// Inverse of [`softplus`].
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).max(1e-300).ln()
    }
}
