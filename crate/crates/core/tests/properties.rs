mod common;

use proptest::prelude::*;

use common::{assign_oracle, iou_oracle, trim_oracle};
use daca::augment::{apply_pipeline, horizontal_flip, ops_for, sample_pipeline, AugKind};
use daca::compose::{compose, CompositePlan};
use daca::eval::{average_precision, iou, match_detections};
use daca::harness::surrogate_loss;
use daca::model::{parse_detections, parse_ground_truth, serialize_labels};
use daca::selection::{assign_cell, filter_confidence, select_region, trim_box, GridLayout};
use daca::{BBox, Detection, Dims, GroundTruth, Image, Parallelism, PixelRect, Substream};

const LAYOUTS: [(u32, u32); 4] = [(2, 2), (2, 3), (3, 2), (3, 3)];

fn corners() -> impl Strategy<Value = [f64; 4]> {
    (-60.0..620.0f64, -60.0..620.0f64, 1.0..300.0f64, 1.0..300.0f64).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
}

fn in_image_box(w: f64, h: f64) -> impl Strategy<Value = BBox> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(move |(a, b, c, d)| {
        let bw = 1.0 + c * (w - 1.0);
        let bh = 1.0 + d * (h - 1.0);
        let x = a * (w - bw);
        let y = b * (h - bh);
        BBox::new(x, y, x + bw, y + bh).unwrap()
    })
}

fn detections(w: f64, h: f64, max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((in_image_box(w, h), 0u32..3, 0u32..=1000), 0..max).prop_map(|v| {
        v.into_iter()
            .map(|(b, c, k)| Detection::new(b, c, k as f64 / 1000.0).unwrap())
            .collect()
    })
}

fn noise_image(w: u32, h: u32, seed: u64) -> Image {
    use rand::Rng;
    let mut rng = Substream::new(seed, "noise", 0).rng();
    let pixels = (0..w * h * 3).map(|_| rng.random::<u8>()).collect();
    Image::new(w, h, pixels).unwrap()
}

proptest! {
    #[test]
    fn labels_on_the_print_lattice_round_trip(
        raw in prop::collection::vec((0u32..3, 1u32..999_999, 1u32..999_999, 2u32..400_000, 2u32..400_000), 1..12),
        w in 16u32..2000, h in 16u32..2000,
    ) {
        let dims = Dims::new(w, h);
        let mut text = String::new();
        for (class, cx, cy, bw, bh) in raw {
            let bw = bw.min(2 * cx).min(2 * (1_000_000 - cx));
            let bh = bh.min(2 * cy).min(2 * (1_000_000 - cy));
            if (bw as f64 * w as f64) < 1.1e6 || (bh as f64 * h as f64) < 1.1e6 {
                continue;
            }
            let n = |v: u32| v as f64 / 1e6;
            text.push_str(&format!("{class} {:.6} {:.6} {:.6} {:.6}\n", n(cx), n(cy), n(bw), n(bh)));
        }
        let labels = parse_ground_truth(&text, dims).unwrap();
        let again = parse_ground_truth(&serialize_labels(&labels, dims), dims).unwrap();
        prop_assert_eq!(labels.len(), again.len());
        for (a, b) in labels.iter().zip(&again) {
            prop_assert_eq!(a.class_id, b.class_id);
            for (x, y) in a.bbox.corners().iter().zip(b.bbox.corners()) {
                prop_assert!((x - y).abs() <= 1e-5, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn arbitrary_labels_round_trip_within_print_precision(
        boxes in prop::collection::vec((in_image_box(600.0, 400.0), 0u32..5, 0.0..=1.0f64), 1..12),
    ) {
        let dims = Dims::new(600, 400);
        let dets: Vec<Detection> = boxes.into_iter().map(|(b, c, p)| Detection::new(b, c, p).unwrap()).collect();
        let back = parse_detections(&serialize_labels(&dets, dims), dims).unwrap();
        let bound = 1e-6 * 600.0 + 1e-9;
        prop_assert_eq!(dets.len(), back.len());
        for (a, b) in dets.iter().zip(&back) {
            prop_assert_eq!(a.class_id, b.class_id);
            prop_assert!((a.confidence - b.confidence).abs() <= 5e-7 + 1e-12);
            for (x, y) in a.bbox.corners().iter().zip(b.bbox.corners()) {
                prop_assert!((x - y).abs() <= bound, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn trim_matches_interval_oracle(
        c in corners(),
        layout in 0usize..4, row in 0u32..3, col in 0u32..3,
        vis in prop_oneof![Just(0.0), Just(0.3), 0.0..=1.0f64],
    ) {
        let (rows, cols) = LAYOUTS[layout];
        let grid = GridLayout::new(rows, cols).unwrap();
        let rect = grid.cell_rect(row % rows, col % cols, Dims::new(600, 600)).unwrap();
        let bbox = BBox::new(c[0], c[1], c[2], c[3]).unwrap();
        let got = trim_box(&bbox, rect, vis);
        let want = trim_oracle(c, (rect.x, rect.y, rect.width, rect.height), vis);
        prop_assert_eq!(got.map(|b| b.corners()), want);
        if let Some(t) = got {
            prop_assert!(t.area() <= bbox.area());
            let inside = c[0] >= rect.x as f64 && c[1] >= rect.y as f64
                && c[2] <= rect.x_end() as f64 && c[3] <= rect.y_end() as f64;
            prop_assert_eq!(t.area() == bbox.area(), inside);
        }
    }

    #[test]
    fn assignment_matches_scan_oracle(c in corners(), layout in 0usize..4) {
        let (rows, cols) = LAYOUTS[layout];
        let grid = GridLayout::new(rows, cols).unwrap();
        let bbox = BBox::new(c[0], c[1], c[2], c[3]).unwrap();
        let (cx, cy) = ((c[0] + c[2]) / 2.0, (c[1] + c[3]) / 2.0);
        prop_assert_eq!(
            assign_cell(&bbox, grid, Dims::new(600, 600)).unwrap(),
            assign_oracle(cx, cy, 600, 600, rows, cols)
        );
    }

    #[test]
    fn selection_matches_brute_force(dets in detections(600.0, 600.0, 25), layout in 0usize..4) {
        let (rows, cols) = LAYOUTS[layout];
        let grid = GridLayout::new(rows, cols).unwrap();
        let image = Image::filled(600, 600, [9, 9, 9]);
        let mut sums = vec![vec![(0.0f64, 0usize); cols as usize]; rows as usize];
        for d in &dets {
            let (cx, cy) = d.bbox.center();
            let (r, c) = assign_oracle(cx, cy, 600, 600, rows, cols);
            sums[r as usize][c as usize].0 += d.confidence;
            sums[r as usize][c as usize].1 += 1;
        }
        let mut best: Option<((u32, u32), f64)> = None;
        for r in 0..rows {
            for c in 0..cols {
                let (s, n) = sums[r as usize][c as usize];
                if n > 0 && best.is_none_or(|(_, m)| s / n as f64 > m) {
                    best = Some(((r, c), s / n as f64));
                }
            }
        }
        match (select_region(&image, &dets, grid, 0.0), best) {
            (Ok(sel), Some((cell, mean))) => {
                prop_assert_eq!(sel.cell, cell);
                prop_assert_eq!(sel.mean_confidence, mean);
                let rect = sel.rect;
                for p in &sel.pseudo_labels {
                    prop_assert!(p.bbox.is_within(rect.width as f64, rect.height as f64));
                    let back = p.bbox.translate(rect.x as f64, rect.y as f64);
                    prop_assert!(back.x_min() >= rect.x as f64 && back.x_max() <= rect.x_end() as f64);
                    prop_assert!(back.y_min() >= rect.y as f64 && back.y_max() <= rect.y_end() as f64);
                }
            }
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "selection {:?} vs oracle {:?}", got.map(|s| s.cell), want),
        }
    }

    #[test]
    fn confidence_filter_is_monotone_and_idempotent(dets in detections(300.0, 300.0, 30), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at_lo = filter_confidence(&dets, lo).unwrap();
        let at_hi = filter_confidence(&dets, hi).unwrap();
        prop_assert!(at_hi.len() <= at_lo.len());
        prop_assert!(at_hi.iter().all(|d| at_lo.contains(d)));
        prop_assert_eq!(filter_confidence(&at_lo, lo).unwrap(), at_lo);
    }

    #[test]
    fn flip_is_an_involution(w in 1u32..40, h in 1u32..40, seed in any::<u64>(), q in prop::collection::vec((0u32..160, 0u32..160, 4u32..80, 4u32..80), 0..6)) {
        let image = noise_image(w, h, seed);
        let (fw, fh) = (w as f64, h as f64);
        let boxes: Vec<Detection> = q
            .into_iter()
            .filter_map(|(x, y, bw, bh)| {
                let (x, y) = (x as f64 / 4.0, y as f64 / 4.0);
                let (x1, y1) = ((x + bw as f64 / 4.0).min(fw), (y + bh as f64 / 4.0).min(fh));
                (x1 - x >= 1.0 && y1 - y >= 1.0).then(|| Detection::new(BBox::new(x, y, x1, y1).unwrap(), 0, 0.5).unwrap())
            })
            .collect();
        let (once, once_boxes) = horizontal_flip(&image, &boxes);
        let (twice, twice_boxes) = horizontal_flip(&once, &once_boxes);
        prop_assert_eq!(twice, image);
        prop_assert_eq!(twice_boxes, boxes);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in corners(), b in corners()) {
        let (ba, bb) = (BBox::new(a[0], a[1], a[2], a[3]).unwrap(), BBox::new(b[0], b[1], b[2], b[3]).unwrap());
        let v = iou(&ba, &bb);
        prop_assert_eq!(v, iou(&bb, &ba));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - iou_oracle(a, b)).abs() < 1e-12);
        prop_assert_eq!(iou(&ba, &ba), 1.0);
    }

    #[test]
    fn confidence_scaling_preserves_ranking_and_ap(
        dets in detections(200.0, 200.0, 10),
        gts in prop::collection::vec((in_image_box(200.0, 200.0), 0u32..3), 1..10),
        scale in 0.01..=1.0f64,
    ) {
        let gts: Vec<GroundTruth> = gts.into_iter().map(|(b, c)| GroundTruth::new(b, c)).collect();
        let scaled: Vec<Detection> = dets.iter().map(|d| Detection::new(d.bbox, d.class_id, d.confidence * scale).unwrap()).collect();
        for class in 0..3 {
            let a = match_detections(&dets, &gts, 0.5, class).unwrap();
            let b = match_detections(&scaled, &gts, 0.5, class).unwrap();
            let key = |m: &daca::eval::MatchResult| m.flags.iter().map(|f| (f.detection, f.true_positive)).collect::<Vec<_>>();
            prop_assert_eq!(key(&a), key(&b));
            let ap = |d: &[Detection]| average_precision(d, &gts, class, 0.5).map(|r| r.ap).ok();
            prop_assert_eq!(ap(&dets), ap(&scaled));
        }
    }

    #[test]
    fn recall_falls_as_threshold_rises(
        dets in detections(200.0, 200.0, 10),
        gts in prop::collection::vec(in_image_box(200.0, 200.0), 1..10),
        a in 0.0..=1.0f64, b in 0.0..=1.0f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let gts: Vec<GroundTruth> = gts.into_iter().map(|b| GroundTruth::new(b, 0)).collect();
        let recall = |t: f64| average_precision(&filter_confidence(&dets, t).unwrap(), &gts, 0, 0.5).unwrap().recall;
        prop_assert!(recall(hi) <= recall(lo));
    }

    #[test]
    fn surrogate_loss_is_zero_only_on_agreement(dets in detections(200.0, 200.0, 8), other in detections(200.0, 200.0, 8)) {
        prop_assert_eq!(surrogate_loss(&dets, &dets), 0.0);
        let l = surrogate_loss(&other, &dets);
        prop_assert!(l >= 0.0);
        if other.len() != dets.len() {
            prop_assert!(l > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pipelines_preserve_shape_and_bounds(
        seed in any::<u64>(),
        mask in 0u8..64,
        dets in detections(60.0, 48.0, 6),
    ) {
        let kinds: Vec<AugKind> = AugKind::ALL.iter().copied().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, k)| k).collect();
        let ops: Vec<_> = ops_for(&kinds).into_iter().map(|o| o.with_probability(1.0)).collect();
        let image = noise_image(60, 48, seed);
        let pipeline = sample_pipeline(&ops, Substream::new(seed, "crop", 0));
        let (out, boxes) = apply_pipeline(&image, &dets, &pipeline);
        prop_assert_eq!(out.dims(), image.dims());
        prop_assert!(boxes.iter().all(|d| d.bbox.is_within(60.0, 48.0)));
        prop_assert_eq!(boxes.len(), dets.len());
        if !kinds.iter().any(|k| k.is_geometric()) {
            prop_assert_eq!(&boxes, &dets);
        }
        let again = apply_pipeline(&image, &dets, &sample_pipeline(&ops, Substream::new(seed, "crop", 0)));
        prop_assert_eq!((out, boxes), again);
    }

    #[test]
    fn composite_boxes_stay_in_their_cells(seed in any::<u64>(), layout in 0usize..4, dets in detections(40.0, 40.0, 6)) {
        let (rows, cols) = LAYOUTS[layout];
        let dims = Dims::new(40 * cols, 40 * rows);
        let grid = GridLayout::new(rows, cols).unwrap();
        let plan = CompositePlan::new(dims, grid, ops_for(&AugKind::ALL));
        let crop = noise_image(40, 40, seed);
        let result = compose(&crop, &dets, &plan, seed, "p", Parallelism::Sequential).unwrap();
        prop_assert_eq!(result.image.dims(), dims);
        let mut offset = 0;
        for cell in &result.per_cell {
            let (r, c) = cell.cell;
            let rect = PixelRect { x: c * 40, y: r * 40, width: 40, height: 40 };
            for d in &result.pseudo_labels[offset..offset + cell.label_count] {
                prop_assert!(d.bbox.x_min() >= rect.x as f64 && d.bbox.x_max() <= rect.x_end() as f64);
                prop_assert!(d.bbox.y_min() >= rect.y as f64 && d.bbox.y_max() <= rect.y_end() as f64);
            }
            offset += cell.label_count;
        }
        prop_assert_eq!(offset, result.pseudo_labels.len());
    }
}
