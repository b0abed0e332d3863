//! Triangular plaquette lattices with double links, super-sites and the dual
//! honeycomb lattice.
//!
//! Every plaquette owns three private matter sites, one per corner. Corners of
//! neighbouring plaquettes that sit on the same lattice vertex form a
//! super-site. A link between two vertices carries one gauge spin; when two
//! plaquettes share it, it is a double link with four attached matter sites.
//!
//! Ids are dense and assigned in construction order so every derived quantity
//! (basis ordering, CSV columns, snapshots) is reproducible.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatterSite {
    pub id: usize,
    pub plaquette: usize,
    /// Super-site (lattice vertex) this site belongs to.
    pub super_site: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Link {
    pub id: usize,
    /// The two super-sites joined by this link, lower id first.
    pub ends: [usize; 2],
    /// Plaquettes containing the link (one on the boundary, two for a double link).
    pub plaquettes: Vec<usize>,
}

impl Link {
    pub fn is_double(&self) -> bool {
        self.plaquettes.len() == 2
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Plaquette {
    pub id: usize,
    /// Corners in the cyclic order used for the hopping phases.
    pub vertices: [usize; 3],
    /// `sites[k]` is the matter site at `vertices[k]`.
    pub sites: [usize; 3],
    /// `links[k]` joins `vertices[k]` and `vertices[(k + 1) % 3]`.
    pub links: [usize; 3],
    pub orientation: Orientation,
}

impl Plaquette {
    /// Position of `vertex` in the cyclic order, if it is a corner.
    pub fn corner_of(&self, vertex: usize) -> Option<usize> {
        self.vertices.iter().position(|&v| v == vertex)
    }

    /// Position of `link` in `links`, if it bounds this plaquette.
    pub fn edge_of(&self, link: usize) -> Option<usize> {
        self.links.iter().position(|&l| l == link)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperSite {
    pub id: usize,
    pub member_matter_sites: Vec<usize>,
    pub incident_links: Vec<usize>,
    /// Number of plaquettes meeting at this vertex.
    pub n_plaquettes: usize,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSite {
    pub id: usize,
    pub plaquette: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DualEnd {
    Site(usize),
    /// Free end on the open boundary of the dual lattice.
    Boundary,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualLink {
    /// The primal link crossed by this dual link (same id).
    pub link: usize,
    pub ends: [DualEnd; 2],
}

impl DualLink {
    pub fn is_interior(&self) -> bool {
        !self.ends.contains(&DualEnd::Boundary)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualGeometry {
    pub sites: Vec<DualSite>,
    pub links: Vec<DualLink>,
}

impl DualGeometry {
    /// Primal link crossed by dual link `dual_link`.
    pub fn primal_link(&self, dual_link: usize) -> usize {
        self.links[dual_link].link
    }

    /// Dual link crossing primal link `link`.
    pub fn dual_of_link(&self, link: usize) -> usize {
        self.links
            .iter()
            .position(|d| d.link == link)
            .expect("every primal link has a dual partner")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeGeometry {
    pub name: String,
    pub plaquettes: Vec<Plaquette>,
    pub links: Vec<Link>,
    pub super_sites: Vec<SuperSite>,
    pub matter_sites: Vec<MatterSite>,
    pub dual_sites: Vec<DualSite>,
}

impl LatticeGeometry {
    /// Builds a geometry from triangles given as vertex triples.
    ///
    /// `orientations[n % len]` fixes the cyclic corner order of triangle `n`;
    /// positions decide what counterclockwise means.
    pub fn from_triangles(
        name: &str,
        positions: &[[f64; 2]],
        triangles: &[[usize; 3]],
        orientations: &[Orientation],
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::param("triangles", "at least one plaquette required"));
        }
        if orientations.is_empty() {
            return Err(Error::param("orientations", "pattern must not be empty"));
        }
        let n_vertices = positions.len();
        let mut plaquettes = Vec::with_capacity(triangles.len());
        let mut links: Vec<Link> = Vec::new();
        let mut link_index: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut matter_sites = Vec::with_capacity(3 * triangles.len());

        for (n, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n_vertices {
                    return Err(Error::UnknownId {
                        kind: "vertex",
                        id: v,
                        available: n_vertices,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::param("triangles", format!("triangle {n} repeats a vertex")));
            }
            let orientation = orientations[n % orientations.len()];
            let vertices = cyclic_order(positions, *tri, orientation);
            let mut sites = [0; 3];
            for (k, &v) in vertices.iter().enumerate() {
                let id = matter_sites.len();
                matter_sites.push(MatterSite {
                    id,
                    plaquette: n,
                    super_site: v,
                });
                sites[k] = id;
            }
            let mut plaquette_links = [0; 3];
            for k in 0..3 {
                let (a, b) = (vertices[k], vertices[(k + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                let id = *link_index.entry(key).or_insert_with(|| {
                    links.push(Link {
                        id: links.len(),
                        ends: key,
                        plaquettes: Vec::new(),
                    });
                    links.len() - 1
                });
                if links[id].plaquettes.len() == 2 {
                    return Err(Error::param(
                        "triangles",
                        format!("link {key:?} would be shared by more than two plaquettes"),
                    ));
                }
                links[id].plaquettes.push(n);
                plaquette_links[k] = id;
            }
            plaquettes.push(Plaquette {
                id: n,
                vertices,
                sites,
                links: plaquette_links,
                orientation,
            });
        }

        let super_sites = (0..n_vertices)
            .map(|v| {
                let member_matter_sites: Vec<usize> = matter_sites
                    .iter()
                    .filter(|s| s.super_site == v)
                    .map(|s| s.id)
                    .collect();
                let incident_links = links
                    .iter()
                    .filter(|l| l.ends.contains(&v))
                    .map(|l| l.id)
                    .collect();
                SuperSite {
                    id: v,
                    n_plaquettes: member_matter_sites.len(),
                    member_matter_sites,
                    incident_links,
                    position: positions[v],
                }
            })
            .collect::<Vec<_>>();
        if let Some(s) = super_sites.iter().find(|s| s.member_matter_sites.is_empty()) {
            return Err(Error::param("positions", format!("vertex {} touches no plaquette", s.id)));
        }

        let dual_sites = plaquettes
            .iter()
            .map(|p| DualSite { id: p.id, plaquette: p.id })
            .collect();

        Ok(Self {
            name: name.to_string(),
            plaquettes,
            links,
            super_sites,
            matter_sites,
            dual_sites,
        })
    }

    pub fn n_plaquettes(&self) -> usize {
        self.plaquettes.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_matter_sites(&self) -> usize {
        self.matter_sites.len()
    }

    pub fn n_super_sites(&self) -> usize {
        self.super_sites.len()
    }

    pub fn double_links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(|l| l.is_double())
    }

    /// Matter sites directly attached to `link`, grouped by the super-site
    /// (link end) they sit on: `[sites at ends[0], sites at ends[1]]`.
    pub fn attached_sites(&self, link: usize) -> [Vec<usize>; 2] {
        let l = &self.links[link];
        let mut sides = [Vec::new(), Vec::new()];
        for &p in &l.plaquettes {
            let plaq = &self.plaquettes[p];
            for (side, &end) in l.ends.iter().enumerate() {
                let k = plaq.corner_of(end).expect("link end is a plaquette corner");
                sides[side].push(plaq.sites[k]);
            }
        }
        sides
    }

    /// The dual honeycomb lattice: one dual site per plaquette and one dual
    /// link per primal link. Boundary links give dual links with a free end.
    pub fn dual_lattice(&self) -> DualGeometry {
        let links = self
            .links
            .iter()
            .map(|l| {
                let ends = match l.plaquettes.as_slice() {
                    [a, b] => [DualEnd::Site(*a), DualEnd::Site(*b)],
                    [a] => [DualEnd::Site(*a), DualEnd::Boundary],
                    _ => unreachable!("links belong to one or two plaquettes"),
                };
                DualLink { link: l.id, ends }
            })
            .collect();
        DualGeometry {
            sites: self.dual_sites.clone(),
            links,
        }
    }

    /// Adjacency lists for debugging dumps.
    pub fn export(&self) -> GeometryExport {
        GeometryExport {
            name: self.name.clone(),
            plaquettes: self
                .plaquettes
                .iter()
                .map(|p| (p.id, p.links.to_vec()))
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| (l.id, self.attached_sites(l.id)))
                .collect(),
            link_ends: self.links.iter().map(|l| (l.id, l.ends)).collect(),
            super_sites: self
                .super_sites
                .iter()
                .map(|s| (s.id, s.member_matter_sites.clone()))
                .collect(),
        }
    }
}

/// Structured adjacency dump: plaquette → links, link → attached matter sites
/// per side.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryExport {
    pub name: String,
    pub plaquettes: BTreeMap<usize, Vec<usize>>,
    pub links: BTreeMap<usize, [Vec<usize>; 2]>,
    pub link_ends: BTreeMap<usize, [usize; 2]>,
    pub super_sites: BTreeMap<usize, Vec<usize>>,
}

fn cyclic_order(positions: &[[f64; 2]], tri: [usize; 3], orientation: Orientation) -> [usize; 3] {
    let [a, b, c] = tri.map(|v| positions[v]);
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let ccw = cross > 0.0;
    let keep = matches!(
        (ccw, orientation),
        (true, Orientation::CounterClockwise) | (false, Orientation::Clockwise)
    );
    if keep {
        tri
    } else {
        [tri[0], tri[2], tri[1]]
    }
}

/// A strip of `n` triangles: triangle `k` has vertices `k, k + 1, k + 2`, so
/// consecutive plaquettes share one double link and every third vertex is
/// shared by three plaquettes. `orientation_pattern` is repeated cyclically.
pub fn build_chain_of_plaquettes(n: usize, orientation_pattern: &[Orientation]) -> Result<LatticeGeometry> {
    if n == 0 {
        return Err(Error::param("n", "a chain needs at least one plaquette"));
    }
    let height = 3f64.sqrt() / 2.0;
    let positions: Vec<[f64; 2]> = (0..n + 2)
        .map(|k| [k as f64 / 2.0, if k % 2 == 1 { height } else { 0.0 }])
        .collect();
    let triangles: Vec<[usize; 3]> = (0..n).map(|k| [k, k + 1, k + 2]).collect();
    LatticeGeometry::from_triangles(&format!("tri{n}"), &positions, &triangles, orientation_pattern)
}

/// Named presets: `tri1`, `tri2`, `tri3` (chains of counterclockwise plaquettes).
pub fn preset(name: &str) -> Result<LatticeGeometry> {
    let n = match name {
        "tri1" => 1,
        "tri2" => 2,
        "tri3" => 3,
        other => {
            return Err(Error::param(
                "geometry",
                format!("unknown preset `{other}` (expected tri1, tri2 or tri3)"),
            ))
        }
    };
    build_chain_of_plaquettes(n, &[Orientation::CounterClockwise])
}
