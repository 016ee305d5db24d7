use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};

use super::lattice::{LatticeDefinition, LatticeSite};
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ion {
    pub id: usize,
    /// Cartesian position in the D1/D2/b frame, nm.
    pub position: Vec3,
    pub orientation_class: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleSource {
    Lattice {
        site_label: u32,
        doping_fraction: f64,
    },
    Continuous {
        density_per_nm3: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopedEnsemble {
    pub ions: Vec<Ion>,
    pub sphere_radius: f64,
    pub source: EnsembleSource,
    pub rng_seed: u64,
}

impl DopedEnsemble {
    pub fn len(&self) -> usize {
        self.ions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ions.is_empty()
    }

    pub fn ion(&self, id: usize) -> Option<&Ion> {
        self.ions.get(id)
    }

    /// Ids of ions at least `margin` nm inside the sphere surface, ascending.
    pub fn core_ids(&self, margin: f64) -> Vec<usize> {
        let limit = self.sphere_radius - margin;
        self.ions
            .iter()
            .filter(|ion| ion.position.norm() <= limit)
            .map(|ion| ion.id)
            .collect()
    }
}

/// One (n1, n2, site) column of lattice points with n3 in `lo..=hi` inside the sphere.
#[derive(Debug, Clone, Copy)]
struct Run {
    n1: i64,
    n2: i64,
    site: usize,
    lo: i64,
    hi: i64,
}

impl Run {
    fn len(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }
}

struct SiteEnumeration {
    cell: Matrix3<f64>,
    sites: Vec<LatticeSite>,
    runs: Vec<Run>,
    total: u64,
}

impl SiteEnumeration {
    fn new(lattice: &LatticeDefinition, site_label: u32, radius: f64) -> Result<Self> {
        let sites = lattice.sites_with_label(site_label);
        if sites.is_empty() {
            return Err(Error::invalid(format!(
                "lattice has no sites with label {site_label}"
            )));
        }
        let cell = lattice.cell_matrix();
        let inv = cell
            .try_inverse()
            .ok_or_else(|| Error::invalid("singular cell matrix"))?;
        // |u_i| <= radius * |row_i(inv)| for fractional coordinates u of any point in the sphere
        let bound = |i: usize| radius * inv.row(i).norm();
        let range = |i: usize| ((-bound(i) - 1.0).floor() as i64, bound(i).ceil() as i64);
        let (lo1, hi1) = range(0);
        let (lo2, hi2) = range(1);
        let c = cell.column(2).into_owned();
        let cc = c.norm_squared();
        let r2 = radius * radius;

        let mut runs = Vec::new();
        let mut total = 0u64;
        for n1 in lo1..=hi1 {
            for n2 in lo2..=hi2 {
                for (s, site) in sites.iter().enumerate() {
                    let p0 = site_position(&cell, n1, n2, 0, site);
                    let pc = p0.dot(&c);
                    let disc = pc * pc - cc * (p0.norm_squared() - r2);
                    if disc < 0.0 {
                        continue;
                    }
                    let root = disc.sqrt();
                    let mut lo = ((-pc - root) / cc).ceil() as i64;
                    let mut hi = ((-pc + root) / cc).floor() as i64;
                    // make the interval agree exactly with the pointwise predicate
                    let inside =
                        |n3: i64| site_position(&cell, n1, n2, n3, site).norm_squared() <= r2;
                    while inside(lo - 1) {
                        lo -= 1;
                    }
                    while lo <= hi && !inside(lo) {
                        lo += 1;
                    }
                    while inside(hi + 1) {
                        hi += 1;
                    }
                    while hi >= lo && !inside(hi) {
                        hi -= 1;
                    }
                    if hi >= lo {
                        let run = Run {
                            n1,
                            n2,
                            site: s,
                            lo,
                            hi,
                        };
                        total += run.len();
                        runs.push(run);
                    }
                }
            }
        }
        Ok(SiteEnumeration {
            cell,
            sites,
            runs,
            total,
        })
    }
}

/// Cartesian position of a lattice site in cell (n1, n2, n3).
pub fn site_position(cell: &Matrix3<f64>, n1: i64, n2: i64, n3: i64, site: &LatticeSite) -> Vec3 {
    let f = Vector3::new(
        n1 as f64 + site.fractional[0],
        n2 as f64 + site.fractional[1],
        n3 as f64 + site.fractional[2],
    );
    cell * f
}

/// Number of sites with `site_label` inside a sphere of `radius` nm centred at the origin.
pub fn count_sites_in_sphere(
    lattice: &LatticeDefinition,
    site_label: u32,
    radius: f64,
) -> Result<u64> {
    if !(radius > 0.0) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    Ok(SiteEnumeration::new(lattice, site_label, radius)?.total)
}

/// Dope every site with label `site_label` inside the sphere independently with
/// probability `doping_fraction`.
///
/// Sites are visited in a fixed order (n1, n2, site, n3) and the gaps between
/// dopants are drawn from a geometric distribution, which is the same Bernoulli
/// process as one draw per site but costs O(dopants).
pub fn generate_ensemble(
    lattice: &LatticeDefinition,
    site_label: u32,
    sphere_radius: f64,
    doping_fraction: f64,
    seed: u64,
) -> Result<DopedEnsemble> {
    if !(sphere_radius > 0.0) || !sphere_radius.is_finite() {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    if !(doping_fraction > 0.0 && doping_fraction < 1.0) {
        return Err(Error::invalid("doping fraction must lie in (0, 1)"));
    }
    lattice.validate()?;
    let sites = SiteEnumeration::new(lattice, site_label, sphere_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Geometric::new(doping_fraction).map_err(|e| Error::invalid(e.to_string()))?;

    let mut ions = Vec::new();
    let mut run_iter = sites.runs.iter();
    let mut run = run_iter.next();
    let mut run_start = 0u64;
    // index of the next dopant in the flattened site order
    let mut next = gap.sample(&mut rng);
    while next < sites.total {
        while let Some(r) = run {
            if next < run_start + r.len() {
                break;
            }
            run_start += r.len();
            run = run_iter.next();
        }
        let r = run.expect("index below total lies in some run");
        let n3 = r.lo + (next - run_start) as i64;
        let site = &sites.sites[r.site];
        ions.push(Ion {
            id: ions.len(),
            position: site_position(&sites.cell, r.n1, r.n2, n3, site),
            orientation_class: site.orientation_class,
        });
        next = next.saturating_add(1).saturating_add(gap.sample(&mut rng));
    }
    if ions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(DopedEnsemble {
        ions,
        sphere_radius,
        source: EnsembleSource::Lattice {
            site_label,
            doping_fraction,
        },
        rng_seed: seed,
    })
}

/// Poisson number of ions placed uniformly in the sphere, orientation classes uniform.
pub fn generate_continuous(
    density_per_nm3: f64,
    sphere_radius: f64,
    seed: u64,
) -> Result<DopedEnsemble> {
    if !(density_per_nm3 > 0.0) || !density_per_nm3.is_finite() {
        return Err(Error::invalid("density must be positive"));
    }
    if !(sphere_radius > 0.0) || !sphere_radius.is_finite() {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let volume = 4.0 / 3.0 * std::f64::consts::PI * sphere_radius.powi(3);
    let mean = density_per_nm3 * volume;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let r2 = sphere_radius * sphere_radius;
    let mut ions = Vec::with_capacity(count);
    while ions.len() < count {
        let p = Vec3::new(
            rng.random_range(-sphere_radius..sphere_radius),
            rng.random_range(-sphere_radius..sphere_radius),
            rng.random_range(-sphere_radius..sphere_radius),
        );
        if p.norm_squared() > r2 {
            continue;
        }
        let orientation_class = rng.random_range(0..4u8);
        ions.push(Ion {
            id: ions.len(),
            position: p,
            orientation_class,
        });
    }
    Ok(DopedEnsemble {
        ions,
        sphere_radius,
        source: EnsembleSource::Continuous { density_per_nm3 },
        rng_seed: seed,
    })
}
