use jcsdrm::exp_family::{DirectionalFamily, DirectionalParams, FisherExpParams};
use jcsdrm::grid::Grid;
use jcsdrm::linalg::Vec3;
use jcsdrm::rag::{
    build_rag, connected_components, edge_weight_wb, edge_weight_wd, extract_regions, median_filter_labels, LabelMap,
    RagConfig, RegionNode,
};
use proptest::prelude::*;

const FRONT: Vec3<f64> = [0.0, 0.0, -1.0];

fn normals(w: usize, h: usize, n: Vec3<f64>) -> Grid<Option<Vec3<f64>>> {
    Grid::filled(w, h, Some(n))
}

fn cfg(min_px: usize) -> RagConfig {
    RagConfig {
        family: DirectionalFamily::Fisher,
        min_region_px: min_px,
        filter: false,
    }
}

fn node(direction: Vec3<f64>, kappa: f64, family: DirectionalFamily) -> RegionNode<f64> {
    let eta = DirectionalParams::from_source(&direction, kappa, family).unwrap();
    let mut n = RegionNode {
        id: 0,
        pixel_count: 1,
        valid_count: 1,
        pi: 1.0,
        eta,
        mu: [0.0; 3],
        kappa: 0.0,
        pixels: vec![],
    };
    n.refresh();
    n
}

#[test]
fn mode_filter_keeps_uniform_map() {
    let l = Grid::filled(5, 4, 7u32);
    assert_eq!(median_filter_labels(&l), l);
}

#[test]
fn mode_filter_removes_isolated_pixel() {
    let mut l = Grid::filled(5, 5, 1u32);
    l.set(2, 2, 9);
    assert_eq!(median_filter_labels(&l), Grid::filled(5, 5, 1));
}

#[test]
fn mode_filter_keeps_straight_boundary() {
    let l = Grid::from_fn(6, 6, |x, _| if x < 3 { 4u32 } else { 2 });
    assert_eq!(median_filter_labels(&l), l);
    let t = Grid::from_fn(6, 6, |_, y| if y < 3 { 0u32 } else { 1 });
    assert_eq!(median_filter_labels(&t), t);
}

#[test]
fn disjoint_blobs_become_two_regions() {
    let l = Grid::from_fn(20, 10, |x, _| if (7..13).contains(&x) { 1u32 } else { 0 });
    let (_, n) = connected_components(&l);
    assert_eq!(n, 3);
    let (regions, nodes) = extract_regions(&l, &normals(20, 10, FRONT), DirectionalFamily::Fisher, 50).unwrap();
    assert_eq!(nodes.len(), 3);
    assert_ne!(regions.get(0, 0), regions.get(19, 0));
}

#[test]
fn small_regions_absorbed_into_longest_boundary() {
    // A 3×3 island touching region 0 along one side, enclosed by region 1 otherwise.
    let mut l = Grid::from_fn(20, 20, |x, _| if x < 8 { 0u32 } else { 1 });
    for y in 8..11 {
        for x in 8..11 {
            l.set(x, y, 2);
        }
    }
    let (regions, nodes) = extract_regions(&l, &normals(20, 20, FRONT), DirectionalFamily::Fisher, 50).unwrap();
    assert_eq!(nodes.len(), 2);
    assert_eq!(regions.get(9, 9), regions.get(15, 0));
    // Larger region gets id 0.
    assert_eq!(*regions.get(15, 0), 0);
    assert_eq!(nodes[0].pixel_count, 240);
    assert_eq!(nodes[1].pixel_count, 160);
}

#[test]
fn frontal_plane_region_is_concentrated() {
    let l = Grid::filled(10, 10, 0u32);
    for family in [DirectionalFamily::Fisher, DirectionalFamily::Watson] {
        let (_, nodes) = extract_regions(&l, &normals(10, 10, FRONT), family, 50).unwrap();
        assert!(nodes[0].kappa > 100.0, "{family:?} {}", nodes[0].kappa);
        let mu = nodes[0].mu;
        assert!((mu[2].abs() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn priors_sum_to_one_and_count_valid_pixels() {
    let l = Grid::from_fn(30, 20, |x, y| (x / 10 + 3 * (y / 10)) as u32);
    let mut n = normals(30, 20, FRONT);
    for x in 0..30 {
        n.set(x, 0, None);
    }
    let g = Grid::filled(30, 20, 0.0);
    let graph = build_rag(&l, &n, &g, &cfg(50)).unwrap();
    assert!((graph.total_pi() - 1.0).abs() < 1e-9);
    let valid: usize = graph.nodes.values().map(|n| n.valid_count).sum();
    assert_eq!(valid, 30 * 19);
    assert_eq!(graph.total_valid, 30 * 19);
    let pixels: usize = graph.nodes.values().map(|n| n.pixel_count).sum();
    assert_eq!(pixels, 600);
}

#[test]
fn two_regions_one_edge() {
    let l = Grid::from_fn(20, 10, |x, _| u32::from(x >= 10));
    let g = build_rag(&l, &normals(20, 10, FRONT), &Grid::filled(20, 10, 0.0), &cfg(50)).unwrap();
    assert_eq!(g.nodes.len(), 2);
    assert_eq!(g.edges.len(), 1);
    let e = g.edge(0, 1).unwrap();
    assert_eq!(e.boundary_pixels, 20);
    assert_eq!(e.w_b, 0.0);
    assert!(e.w_d.abs() < 1e-9);
}

#[test]
fn stripes_form_a_path() {
    let l = Grid::from_fn(12, 30, |_, y| (y / 10) as u32);
    let g = build_rag(&l, &normals(12, 30, FRONT), &Grid::filled(12, 30, 0.0), &cfg(50)).unwrap();
    assert_eq!(g.edges.len(), 2);
    let top = *g.labels.get(0, 0);
    let mid = *g.labels.get(0, 15);
    let bot = *g.labels.get(0, 29);
    assert!(g.edge(top, mid).is_some());
    assert!(g.edge(mid, bot).is_some());
    assert!(g.edge(top, bot).is_none());
}

#[test]
fn quadrants_form_a_four_cycle() {
    let l = Grid::from_fn(20, 20, |x, y| u32::from(x >= 10) + 2 * u32::from(y >= 10));
    let g = build_rag(&l, &normals(20, 20, FRONT), &Grid::filled(20, 20, 0.0), &cfg(50)).unwrap();
    assert_eq!(g.nodes.len(), 4);
    assert_eq!(g.edges.len(), 4);
    let q = |x, y| *g.labels.get(x, y);
    assert!(g.edge(q(0, 0), q(19, 19)).is_none());
    assert!(g.edge(q(19, 0), q(0, 19)).is_none());
    for id in g.nodes.keys() {
        assert_eq!(g.neighbors(*id).len(), 2);
    }
}

#[test]
fn half_strength_boundary() {
    let l = Grid::from_fn(8, 8, |x, _| u32::from(x >= 4));
    let grad = Grid::from_fn(8, 8, |x, _| if x == 3 || x == 4 { 0.5 } else { 0.9 });
    let band: Vec<usize> = (0..8).flat_map(|y| [y * 8 + 3, y * 8 + 4]).collect();
    assert_eq!(edge_weight_wb(&band, &grad), 0.5);
    let g = build_rag(&l, &normals(8, 8, FRONT), &grad, &cfg(1)).unwrap();
    let e = g.edge(0, 1).unwrap();
    assert_eq!(e.boundary_pixels, 16);
    assert_eq!(e.w_b, 0.5);
    let ones = Grid::from_fn(8, 8, |x, _| if x == 3 || x == 4 { 1.0 } else { 0.0 });
    assert_eq!(build_rag(&l, &normals(8, 8, FRONT), &ones, &cfg(1)).unwrap().edge(0, 1).unwrap().w_b, 1.0);
}

#[test]
fn identical_nodes_have_zero_divergence() {
    for family in [DirectionalFamily::Fisher, DirectionalFamily::Watson] {
        let a = node([0.0, 0.6, -0.8], 40.0, family);
        assert!(edge_weight_wd(&a, &a.clone()).unwrap().abs() < 1e-9);
    }
}

#[test]
fn orthogonal_wall_and_ceiling_exceed_threshold() {
    for family in [DirectionalFamily::Fisher, DirectionalFamily::Watson] {
        let wall = node([0.0, 0.0, -1.0], 65.0, family);
        let ceiling = node([0.0, 1.0, 0.0], 67.0, family);
        let w = edge_weight_wd(&wall, &ceiling).unwrap();
        assert!(w > 3.0, "{family:?} {w}");
        assert_eq!(w, edge_weight_wd(&ceiling, &wall).unwrap());
    }
}

#[test]
fn graph_json_dump() {
    let l = Grid::from_fn(20, 10, |x, _| u32::from(x >= 10));
    let g = build_rag(&l, &normals(20, 10, FRONT), &Grid::filled(20, 10, 0.2), &cfg(50)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
    assert_eq!(v["edges"].as_array().unwrap().len(), 1);
    assert!(v["edges"][0]["w_b"].as_f64().unwrap() > 0.19);
    assert!(v["nodes"]["0"]["kappa"].as_f64().unwrap() > 100.0);
}

fn arb_labels() -> impl Strategy<Value = LabelMap> {
    (4usize..16, 4usize..16).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0u32..4, w * h).prop_map(move |v| Grid::from_vec(w, h, v).unwrap())
    })
}

fn arb_normal() -> impl Strategy<Value = Vec3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..-0.1).prop_map(|(x, y, z)| {
        let n = (x * x + y * y + z * z).sqrt();
        [x / n, y / n, z / n]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_invariants(
        labels in arb_labels(),
        min_px in 1usize..10,
        seed_normals in proptest::collection::vec(arb_normal(), 4),
        grad_scale in 0.0f64..1.0,
        watson in any::<bool>(),
    ) {
        let (w, h) = (labels.width(), labels.height());
        let family = if watson { DirectionalFamily::Watson } else { DirectionalFamily::Fisher };
        let n = Grid::from_fn(w, h, |x, y| Some(seed_normals[*labels.get(x, y) as usize]));
        let g = Grid::from_fn(w, h, |x, y| grad_scale * ((x * 7 + y * 3) % 5) as f64 / 4.0);
        let cfg = RagConfig { family, min_region_px: min_px, filter: true };
        let graph = build_rag(&labels, &n, &g, &cfg).unwrap();

        let z = graph.nodes.len() as u32;
        prop_assert!(graph.labels.as_slice().iter().all(|&l| l < z));
        prop_assert!((graph.total_pi() - 1.0).abs() < 1e-9);
        let total: usize = graph.nodes.values().map(|n| n.pixel_count).sum();
        prop_assert_eq!(total, w * h);
        for node in graph.nodes.values() {
            prop_assert!((node.eta.kappa() - node.kappa).abs() <= 1e-9 * node.kappa.max(1.0));
            if z > 1 {
                prop_assert!(node.pixel_count >= min_px);
            }
        }
        for (&(i, j), e) in &graph.edges {
            prop_assert!(i < j);
            prop_assert!(e.boundary_pixels >= 1);
            prop_assert!((0.0..=1.0).contains(&e.w_b));
            prop_assert!(e.w_d >= 0.0);
        }
        // Edge iff 4-adjacent somewhere.
        let mut adj = std::collections::BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                let a = *graph.labels.get(x, y);
                if x + 1 < w { let b = *graph.labels.get(x + 1, y); if a != b { adj.insert((a.min(b), a.max(b))); } }
                if y + 1 < h { let b = *graph.labels.get(x, y + 1); if a != b { adj.insert((a.min(b), a.max(b))); } }
            }
        }
        let keys: std::collections::BTreeSet<_> = graph.edges.keys().copied().collect();
        prop_assert_eq!(keys, adj);
    }
}

#[test]
fn wd_holds_saturated_concentration_at_the_clamp() {
    // Mean resultant of nearly identical normals: κ saturates at 1e4.
    let mut raw = RegionNode {
        eta: DirectionalParams::Fisher(FisherExpParams::new([0.0, 0.0, -(1.0 - 1e-9)]).unwrap()),
        ..node(FRONT, 1.0, DirectionalFamily::Fisher)
    };
    raw.refresh();
    assert_eq!(raw.kappa, 1e4);
    let loose = node(FRONT, 282.0, DirectionalFamily::Fisher);
    // For κ ≫ 1 and equal means, KL(κ₁ ‖ κ₂) = ln(κ₁/κ₂) − 1 + κ₂/κ₁.
    let (k1, k2): (f64, f64) = (1e4, 282.0);
    let expected = (k1 / k2).ln() - 1.0 + k2 / k1;
    let got = edge_weight_wd(&raw, &loose).unwrap();
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
}
