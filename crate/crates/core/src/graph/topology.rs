use crate::env::{EnvState, PairingAssignment, ScenarioConfig};

/// Scaled x, y, z, node-type flag, normalized degree.
pub const NODE_FEATURES: usize = 5;

/// Undirected UAV/GU graph. Nodes `0..M` are UAVs and `M..M+N` are GUs.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTopology {
    pub num_uavs: usize,
    pub num_gus: usize,
    pub features: Vec<[f64; NODE_FEATURES]>,
    /// Each edge once, as `(low, high)` node indices.
    pub edges: Vec<(usize, usize)>,
}

impl GraphTopology {
    pub fn num_nodes(&self) -> usize {
        self.num_uavs + self.num_gus
    }

    /// Dense symmetric adjacency without self loops.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.num_nodes();
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in &self.edges {
            if a != b {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
        adj
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let adj = self.adjacency();
        (0..self.num_nodes()).filter(|&j| adj[node][j]).collect()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors(node).len()
    }
}

/// UAV-UAV edges form a complete graph; UAV-GU edges mirror the pairing.
pub fn encode_topology(state: &EnvState, pairing: &PairingAssignment, cfg: &ScenarioConfig) -> GraphTopology {
    let m = state.uavs.len();
    let n = state.gus.len();
    let mut edges = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            edges.push((a, b));
        }
    }
    for u in 0..m {
        for g in 0..n {
            if pairing.is_paired(u, g) {
                edges.push((u, m + g));
            }
        }
    }
    let mut degree = vec![0usize; m + n];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let norm = (m + n - 1).max(1) as f64;
    let ext = cfg.area_half_extent;
    let zmax = cfg.altitude_max();
    let mut features = Vec::with_capacity(m + n);
    for (i, u) in state.uavs.iter().enumerate() {
        let p = u.position;
        features.push([p[0] / ext, p[1] / ext, p[2] / zmax, 1.0, degree[i] as f64 / norm]);
    }
    for (j, g) in state.gus.iter().enumerate() {
        let p = g.position;
        features.push([p[0] / ext, p[1] / ext, 0.0, 0.0, degree[m + j] as f64 / norm]);
    }
    GraphTopology {
        num_uavs: m,
        num_gus: n,
        features,
        edges,
    }
}
