//! Catalog printed by `list-builtins`.

use algebroid_lab_core::algebroid::Action;
use algebroid_lab_core::lie_core::LieAlgebra;
use algebroid_lab_core::manifold::EmbeddedManifold;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub kind: &'static str,
    pub name: &'static str,
    pub description: String,
}

fn action(name: &'static str, what: &str) -> Entry {
    let a = Action::builtin(name).expect("builtin action");
    Entry {
        kind: "action",
        name,
        description: format!("{what}; algebra {} (dim {}), manifold {}", a.algebra().name(), a.algebra().dim(), a.manifold().name()),
    }
}

fn manifold(name: &'static str, what: &str) -> Entry {
    let m = EmbeddedManifold::builtin(name).expect("builtin manifold");
    Entry { kind: "manifold", name, description: format!("{what}; ambient dim {}, dim {}", m.ambient_dim(), m.intrinsic_dim()) }
}

fn algebra(name: &'static str, what: &str) -> Entry {
    let g = LieAlgebra::builtin(name).expect("builtin algebra");
    Entry { kind: "algebra", name, description: format!("{what}; dim {}", g.dim()) }
}

fn plain(kind: &'static str, name: &'static str, what: &str) -> Entry {
    Entry { kind, name, description: what.into() }
}

/// Every builtin, in a fixed order.
pub fn catalog() -> Vec<Entry> {
    vec![
        algebra("so3", "rotations, [e1,e2]=e3 cyclic"),
        algebra("se2", "planar rigid motions"),
        algebra("heisenberg3", "[e1,e2]=e3"),
        plain("algebra", "abelianN", "abelian algebra of dimension N, e.g. abelian2"),
        manifold("sphere2", "unit sphere in R^3"),
        manifold("torus2", "flat torus in R^4"),
        manifold("so3_group", "rotation matrices in R^9"),
        manifold("point", "zero-dimensional manifold"),
        plain("manifold", "euclideanN", "R^N, e.g. euclidean2"),
        action("so3_sphere", "transitive action of so(3) on S^2 by rotation"),
        action("so3_group_right", "right translation on SO(3), free and transitive"),
        action("abelian_torus", "translation action on the torus, transitive"),
        action("se2_plane", "rigid motions of the plane, transitive"),
        action("heisenberg_plane", "affine Heisenberg action on R^2"),
        plain("algebroid", "action", "action algebroid of a builtin action"),
        plain("algebroid", "tangent", "tangent algebroid of a manifold"),
        plain("algebroid", "bundle_of_lie_algebras", "zero anchor, fiber constants optionally scaled by a polynomial"),
        plain("algebroid", "lie_algebra", "Lie algebra over a point"),
        plain("algebroid", "gauge_twisted_so3", "so3 on S^2 in a gauge-twisted frame; fixture with non-constant structure functions"),
        plain("connection", "canonical_flat", "flat connection making constant sections parallel"),
        plain("connection", "trivial", "zero connection"),
        plain("connection", "coefficient", "polynomial coefficients Gamma_ij^l"),
        plain("connection", "random_coefficient", "seeded random polynomial coefficients"),
        plain("connection", "induced_from_tm", "connection induced from a TM-connection"),
        plain("connection", "gauge_twisted", "flat gauge connection for gauge_twisted_so3"),
        plain("connection", "so3_minus", "minus connection on TSO(3)"),
        plain("connection", "dual", "dual of a base connection"),
        plain("connection", "symmetrized", "average of a base connection and its dual"),
        plain("method", "lie_euler", "Lie-Euler, order 1"),
        plain("method", "rkmk4", "Runge-Kutta-Munthe-Kaas, order 4"),
        plain("method", "rk4_ambient", "classical RK4 in ambient coordinates"),
        plain("fixture", "so3_sphere", "reconstruction fixture"),
        plain("fixture", "gauge_twisted_so3", "reconstruction fixture with a gauge-twisted frame"),
        plain("fixture", "dual_curved_so3", "reconstruction fixture whose dual is curved"),
        plain("fixture", "abelian_torus", "reconstruction fixture with abelian result"),
        plain("fixture", "zero_anchor_sphere", "non-transitive reconstruction fixture"),
    ]
}

pub fn render() -> String {
    let mut out = String::new();
    for e in catalog() {
        out.push_str(&format!("{:<10} {:<24} {}\n", e.kind, e.name, e.description));
    }
    out
}
