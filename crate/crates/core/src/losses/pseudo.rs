//! Pseudo object segmentation: an object-only render of the frozen model is
//! compared against the captured image, and pixels that match closely enough
//! while carrying real object opacity become one-hot object labels.

use std::path::Path;

use crate::geometry::Camera;
use crate::image::{ImageGray, ImageRgb, Mask};
use crate::io::{read_pgm, write_pgm_mask};
use crate::render::{render_view, FrameBounds, RenderConfig, RenderMode, SampleField};
use crate::{Error, Result};

/// Pseudo labels for one view/frame. `confidence` holds the similarity
/// margin (threshold minus color difference) on labeled pixels, zero
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSegMap {
    pub labeled: Mask,
    pub confidence: ImageGray,
}

impl PseudoSegMap {
    pub fn width(&self) -> usize {
        self.labeled.width
    }

    pub fn height(&self) -> usize {
        self.labeled.height
    }
}

/// Labels a pixel as object iff the object-only render matches the captured
/// color within `tau_s` mean absolute per-channel difference, the object
/// layer is optically dominant there (alpha > 0.5), and the pixel lies in
/// the captured foreground mask. Deterministic: bin-midpoint sampling, no
/// jitter.
#[allow(clippy::too_many_arguments)]
pub fn generate_pseudo_segmentation<F: SampleField>(
    field: &F,
    cam: &Camera,
    frame: usize,
    bounds: &FrameBounds,
    cfg: &RenderConfig,
    captured: &ImageRgb,
    union_mask: &Mask,
    tau_s: f64,
) -> PseudoSegMap {
    assert_eq!((captured.width, captured.height), (cam.width, cam.height));
    assert_eq!((union_mask.width, union_mask.height), (cam.width, cam.height));
    let r = render_view(field, cam, frame, bounds, cfg, RenderMode::ObjectOnly, None);
    let mut labeled = Mask::new(cam.width, cam.height);
    let mut confidence = ImageGray::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            if !union_mask.get(x, y) || r.alpha.get(x, y) <= 0.5 {
                continue;
            }
            let c = r.color.get(x, y);
            let o = captured.get(x, y);
            let diff = ((c[0] - o[0]).abs() + (c[1] - o[1]).abs() + (c[2] - o[2]).abs()) / 3.0;
            if diff < tau_s {
                labeled.set(x, y, true);
                confidence.set(x, y, tau_s - diff);
            }
        }
    }
    PseudoSegMap { labeled, confidence }
}

/// Writes the label mask as a PGM and the per-pixel confidences as a CSV of
/// labeled pixels only.
pub fn save_pseudo_seg(map: &PseudoSegMap, pgm: &Path, csv_path: &Path) -> Result<()> {
    write_pgm_mask(pgm, &map.labeled)?;
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["x", "y", "confidence"])?;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.labeled.get(x, y) {
                w.write_record([
                    x.to_string(),
                    y.to_string(),
                    format!("{:e}", map.confidence.get(x, y)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_pseudo_seg(pgm: &Path, csv_path: &Path) -> Result<PseudoSegMap> {
    let img = read_pgm(pgm)?;
    let mut labeled = Mask::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            labeled.set(x, y, img.get(x, y) > 0.5);
        }
    }
    let mut confidence = ImageGray::new(img.width, img.height);
    let parse_err = |message: String| Error::Parse {
        path: csv_path.display().to_string(),
        message,
    };
    let mut rd = csv::Reader::from_path(csv_path)?;
    for record in rd.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 columns, got {}", record.len())));
        }
        let x: usize = record[0].parse().map_err(|e| parse_err(format!("x: {e}")))?;
        let y: usize = record[1].parse().map_err(|e| parse_err(format!("y: {e}")))?;
        let c: f64 = record[2].parse().map_err(|e| parse_err(format!("confidence: {e}")))?;
        if x >= img.width || y >= img.height {
            return Err(parse_err(format!("pixel ({x},{y}) outside {}x{}", img.width, img.height)));
        }
        if !labeled.get(x, y) {
            return Err(parse_err(format!("confidence row for unlabeled pixel ({x},{y})")));
        }
        confidence.set(x, y, c);
    }
    Ok(PseudoSegMap { labeled, confidence })
}
