//! Canonical desk-scale test problems shared by the test suite and the
//! command-line studies.

use crate::geometry::{Charge, ChargeSystem, DielectricModel, DomainBox, InterfaceGeometry};
use crate::mesh::{build_square_grid, Mesh};

/// A single centered charge inside a circular interface in a square box.
#[derive(Debug, Clone)]
pub struct BornFixture {
    pub mesh: Mesh,
    pub dm: DielectricModel,
    pub cs: ChargeSystem,
    pub interface: InterfaceGeometry,
    pub domain: DomainBox,
    pub kappa: f64,
}

/// Build the fixture on an `n x n` structured grid of the box `(-1,1)^2`,
/// with interface radius 1/2, `eps_m = 2`, `eps_s = 80`, `kappa = 1` and a
/// unit charge at the origin.
pub fn born_fixture(n: usize) -> BornFixture {
    let domain = DomainBox::new([-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]).unwrap();
    let interface = InterfaceGeometry::Sphere {
        center: [0.0; 3],
        radius: 0.5,
    };
    let mut mesh = build_square_grid(n, &domain).unwrap();
    mesh.assign_regions(&interface);
    let kappa = 1.0;
    let dm = DielectricModel::new(2.0, 80.0, kappa).unwrap();
    let cs = ChargeSystem::new(
        vec![Charge {
            position: [0.0; 3],
            magnitude: 1.0,
        }],
        2.0,
        0.25,
    )
    .unwrap();
    BornFixture {
        mesh,
        dm,
        cs,
        interface,
        domain,
        kappa,
    }
}

/// Far-field variant of [`born_fixture`]: the same charge and interface in
/// the box `(-4,4)^2`, so most of the domain is smooth screened far field
/// and local refinement pays off. `n x n` cells; `n` must keep the interface
/// resolvable (`8/n <= 1/2`, i.e. `n >= 16`).
pub fn born_far_fixture(n: usize) -> BornFixture {
    assert!(n >= 16, "interface needs h <= 1/2");
    let domain = DomainBox::new([-4.0, -4.0, 0.0], [4.0, 4.0, 0.0]).unwrap();
    let interface = InterfaceGeometry::Sphere {
        center: [0.0; 3],
        radius: 0.5,
    };
    let mut mesh = build_square_grid(n, &domain).unwrap();
    mesh.assign_regions(&interface);
    let kappa = 1.0;
    let dm = DielectricModel::new(2.0, 80.0, kappa).unwrap();
    let cs = ChargeSystem::new(
        vec![Charge {
            position: [0.0; 3],
            magnitude: 1.0,
        }],
        2.0,
        0.25,
    )
    .unwrap();
    BornFixture {
        mesh,
        dm,
        cs,
        interface,
        domain,
        kappa,
    }
}
