//! On-disk formats: JSON-lines records tagged `"schema": "upm2/1"`, PNG
//! images, and the raw depth raster.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use nalgebra::{Matrix3, Matrix4};
use polymatch_core::groundtruth::{CameraRig, DepthMap};
use polymatch_core::local_match::{Channel, MatchResult};
use polymatch_core::metrics::MetricsReport;
use polymatch_core::vectorize::{KeypointMatch, LabelImage};
use polymatch_core::{GrayImage, Homography3x3, Point2, Polygon};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::pipeline::StageTimings;

pub const SCHEMA: &str = "upm2/1";
pub const DEPTH_MAGIC: &[u8; 8] = b"UPM2DPT1";

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn check_schema(schema: &str, path: &Path, line: usize) -> Result<(), CliError> {
    if schema != SCHEMA {
        return Err(CliError::Schema(format!("{}: record {line}: schema {schema:?}, expected {SCHEMA:?}", path.display())));
    }
    Ok(())
}

/// Parses one record per non-blank line; errors carry the record index.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, CliError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Schema(format!("{}: record {k}: {e}", path.display())))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonRecord {
    pub schema: String,
    pub id: String,
    pub label: u32,
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub schema: String,
    pub src_id: String,
    pub tgt_id: String,
    pub zeta: f64,
    pub chi: usize,
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointRecord {
    pub schema: String,
    pub plx: f64,
    pub ply: f64,
    pub prx: f64,
    pub pry: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub schema: String,
    #[serde(rename = "P0")]
    pub p0: [f64; 9],
    #[serde(rename = "P1")]
    pub p1: [f64; 9],
    #[serde(rename = "T_L")]
    pub t_l: [f64; 16],
    #[serde(rename = "T_R")]
    pub t_r: [f64; 16],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomographyRecord {
    pub schema: String,
    #[serde(rename = "H")]
    pub h: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub schema: String,
    pub left_label: u32,
    pub right_label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRecord {
    pub schema: String,
    pub num_matches: usize,
    pub num_candidates: usize,
    pub visited: usize,
    pub epipolar: f64,
    pub pyramid: f64,
    pub search: f64,
    pub candidates: f64,
    pub local: f64,
    pub assignment: f64,
    pub total: f64,
}

impl StatsRecord {
    pub fn new(num_matches: usize, num_candidates: usize, visited: usize, t: &StageTimings) -> Self {
        Self {
            schema: SCHEMA.into(),
            num_matches,
            num_candidates,
            visited,
            epipolar: t.epipolar,
            pyramid: t.pyramid,
            search: t.search,
            candidates: t.candidates,
            local: t.local,
            assignment: t.assignment,
            total: t.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub schema: String,
    pub acr: f64,
    pub sas: f64,
    pub mp: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub num: usize,
    pub elapsed: f64,
}

impl From<&MetricsReport> for ReportRecord {
    fn from(r: &MetricsReport) -> Self {
        Self {
            schema: SCHEMA.into(),
            acr: r.acr,
            sas: r.sas,
            mp: r.mp,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            num: r.num_matches,
            elapsed: r.elapsed,
        }
    }
}

fn read_records<T: DeserializeOwned>(path: &Path, schema_of: impl Fn(&T) -> &str) -> Result<Vec<T>, CliError> {
    let recs: Vec<T> = parse_jsonl(&read_text(path)?, path)?;
    for (k, r) in recs.iter().enumerate() {
        check_schema(schema_of(r), path, k)?;
    }
    Ok(recs)
}

fn read_single<T: DeserializeOwned>(path: &Path, schema_of: impl Fn(&T) -> &str) -> Result<T, CliError> {
    let mut recs = read_records(path, schema_of)?;
    if recs.len() != 1 {
        return Err(CliError::Schema(format!("{}: expected one record, found {}", path.display(), recs.len())));
    }
    Ok(recs.remove(0))
}

pub fn polygons_to_records(polys: &[Polygon]) -> Vec<PolygonRecord> {
    polys
        .iter()
        .map(|p| PolygonRecord {
            schema: SCHEMA.into(),
            id: p.id.clone(),
            label: p.label,
            vertices: p.vertices().iter().map(|v| [v.x, v.y]).collect(),
        })
        .collect()
}

pub fn write_polygons(path: &Path, polys: &[Polygon]) -> Result<(), CliError> {
    write_atomic(path, &to_jsonl(&polygons_to_records(polys)))
}

/// Reads polygons; ids must be unique and rings valid CCW.
pub fn read_polygons(path: &Path) -> Result<Vec<Polygon>, CliError> {
    let recs: Vec<PolygonRecord> = read_records(path, |r: &PolygonRecord| &r.schema)?;
    let mut seen = std::collections::HashSet::new();
    recs.into_iter()
        .enumerate()
        .map(|(k, r)| {
            if !seen.insert(r.id.clone()) {
                return Err(CliError::Schema(format!("{}: record {k}: duplicate id {:?}", path.display(), r.id)));
            }
            let ring = r.vertices.iter().map(|v| Point2::new(v[0], v[1])).collect();
            Polygon::new(ring)
                .map(|p| p.with_id(r.id).with_label(r.label))
                .map_err(|e| CliError::Schema(format!("{}: record {k}: {e}", path.display())))
        })
        .collect()
}

pub fn matches_to_records(result: &MatchResult) -> Vec<MatchRecord> {
    result
        .pairs
        .iter()
        .map(|p| MatchRecord {
            schema: SCHEMA.into(),
            src_id: p.src_id.clone(),
            tgt_id: p.tgt_id.clone(),
            zeta: p.zeta,
            chi: p.chi,
            channel: p.channel.as_str().into(),
        })
        .collect()
}

pub fn write_matches(path: &Path, result: &MatchResult) -> Result<(), CliError> {
    write_atomic(path, &to_jsonl(&matches_to_records(result)))
}

pub fn parse_channel(s: &str) -> Option<Channel> {
    [Channel::Geometry, Channel::Texture, Channel::Reference].into_iter().find(|c| c.as_str() == s)
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchRecord>, CliError> {
    let recs = read_records(path, |r: &MatchRecord| &r.schema)?;
    for (k, r) in recs.iter().enumerate() {
        if parse_channel(&r.channel).is_none() {
            return Err(CliError::Schema(format!("{}: record {k}: unknown channel {:?}", path.display(), r.channel)));
        }
    }
    Ok(recs)
}

pub fn write_keypoints(path: &Path, matches: &[KeypointMatch]) -> Result<(), CliError> {
    let recs: Vec<KeypointRecord> = matches
        .iter()
        .map(|m| KeypointRecord { schema: SCHEMA.into(), plx: m.pl.x, ply: m.pl.y, prx: m.pr.x, pry: m.pr.y, score: m.score })
        .collect();
    write_atomic(path, &to_jsonl(&recs))
}

/// Loads keypoint matches; with image dimensions given, points must lie in
/// `[0, w] x [0, h]` of their view.
pub fn load_keypoint_matches(
    path: &Path,
    dims_l: Option<(usize, usize)>,
    dims_r: Option<(usize, usize)>,
) -> Result<Vec<KeypointMatch>, CliError> {
    let recs: Vec<KeypointRecord> = read_records(path, |r: &KeypointRecord| &r.schema)?;
    let inside = |p: Point2, d: Option<(usize, usize)>| {
        d.is_none_or(|(w, h)| p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64)
    };
    recs.into_iter()
        .enumerate()
        .map(|(k, r)| {
            let (pl, pr) = (Point2::new(r.plx, r.ply), Point2::new(r.prx, r.pry));
            if !pl.is_finite() || !pr.is_finite() || !r.score.is_finite() {
                return Err(CliError::Schema(format!("{}: record {k}: non-finite value", path.display())));
            }
            if !inside(pl, dims_l) || !inside(pr, dims_r) {
                return Err(CliError::Schema(format!("{}: record {k}: point outside image", path.display())));
            }
            Ok(KeypointMatch::new(pl, pr, r.score))
        })
        .collect()
}

fn row_major3(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|k| m[(k / 3, k % 3)])
}

fn row_major4(m: &Matrix4<f64>) -> [f64; 16] {
    std::array::from_fn(|k| m[(k / 4, k % 4)])
}

pub fn write_camera(path: &Path, rig: &CameraRig) -> Result<(), CliError> {
    let rec = CameraRecord {
        schema: SCHEMA.into(),
        p0: row_major3(&rig.p0),
        p1: row_major3(&rig.p1),
        t_l: row_major4(&rig.t_l),
        t_r: row_major4(&rig.t_r),
    };
    write_atomic(path, &to_jsonl(&[rec]))
}

pub fn read_camera(path: &Path) -> Result<CameraRig, CliError> {
    let r: CameraRecord = read_single(path, |r: &CameraRecord| &r.schema)?;
    CameraRig::new(
        Matrix3::from_row_slice(&r.p0),
        Matrix3::from_row_slice(&r.p1),
        Matrix4::from_row_slice(&r.t_l),
        Matrix4::from_row_slice(&r.t_r),
    )
    .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn write_homography(path: &Path, h: &Homography3x3) -> Result<(), CliError> {
    write_atomic(path, &to_jsonl(&[HomographyRecord { schema: SCHEMA.into(), h: row_major3(h.matrix()) }]))
}

pub fn read_homography(path: &Path) -> Result<Homography3x3, CliError> {
    let r: HomographyRecord = read_single(path, |r: &HomographyRecord| &r.schema)?;
    Homography3x3::new(Matrix3::from_row_slice(&r.h)).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn write_truth(path: &Path, truth: &[(u32, u32)]) -> Result<(), CliError> {
    let recs: Vec<TruthRecord> =
        truth.iter().map(|&(l, r)| TruthRecord { schema: SCHEMA.into(), left_label: l, right_label: r }).collect();
    write_atomic(path, &to_jsonl(&recs))
}

pub fn read_truth(path: &Path) -> Result<Vec<(u32, u32)>, CliError> {
    Ok(read_records(path, |r: &TruthRecord| &r.schema)?.into_iter().map(|r| (r.left_label, r.right_label)).collect())
}

pub fn read_stats(path: &Path) -> Result<StatsRecord, CliError> {
    read_single(path, |r: &StatsRecord| &r.schema)
}

pub fn read_report(path: &Path) -> Result<ReportRecord, CliError> {
    read_single(path, |r: &ReportRecord| &r.schema)
}

pub fn encode_depth(d: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * d.data.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(d.width as u32).to_le_bytes());
    out.extend_from_slice(&(d.height as u32).to_le_bytes());
    d.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthMap, String> {
    if bytes.len() < 16 || &bytes[..8] != DEPTH_MAGIC {
        return Err("missing UPM2DPT1 header".into());
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if Some(body.len()) != w.checked_mul(h).and_then(|n| n.checked_mul(4)) {
        return Err(format!("expected {w}x{h} floats, found {} bytes", body.len()));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    DepthMap::new(w, h, data).map_err(|e| e.to_string())
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<(), CliError> {
    write_atomic(path, &encode_depth(d))
}

pub fn read_depth(path: &Path) -> Result<DepthMap, CliError> {
    decode_depth(&read_bytes(path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn decode_png(path: &Path) -> Result<DynamicImage, CliError> {
    let bytes = read_bytes(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn encode_png(img: DynamicImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

/// Gray or RGB PNG to intensities in `[0, 255]`.
pub fn read_gray(path: &Path) -> Result<GrayImage, CliError> {
    let img = decode_png(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let g = match img {
        DynamicImage::ImageLuma8(b) => GrayImage::from_vec(w, h, b.into_raw().into_iter().map(f32::from).collect()),
        DynamicImage::ImageLuma16(b) => {
            GrayImage::from_vec(w, h, b.into_raw().into_iter().map(|v| v as f32 / 257.0).collect())
        }
        other => GrayImage::from_rgb8(w, h, &other.to_rgb8().into_raw()),
    };
    g.ok_or_else(|| CliError::Schema(format!("{}: inconsistent image buffer", path.display())))
}

pub fn gray_to_u8(img: &GrayImage) -> Vec<u8> {
    img.data().iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect()
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<(), CliError> {
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(img.width() as u32, img.height() as u32, gray_to_u8(img))
        .expect("buffer matches dimensions");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma8(buf)))
}

pub fn write_rgb(path: &Path, width: usize, height: usize, rgb: Vec<u8>) -> Result<(), CliError> {
    let buf = image::RgbImage::from_raw(width as u32, height as u32, rgb).expect("buffer matches dimensions");
    write_atomic(path, &encode_png(DynamicImage::ImageRgb8(buf)))
}

/// 16-bit (or 8-bit) gray PNG to instance labels.
pub fn read_labels(path: &Path) -> Result<LabelImage, CliError> {
    let img = decode_png(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        _ => return Err(CliError::Schema(format!("{}: label image must be single-channel", path.display()))),
    };
    LabelImage::new(w, h, labels).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn write_labels(path: &Path, labels: &LabelImage) -> Result<(), CliError> {
    let raw: Vec<u16> = labels
        .labels()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| CliError::Schema(format!("label {l} exceeds 16 bits"))))
        .collect::<Result<_, _>>()?;
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(labels.width() as u32, labels.height() as u32, raw)
        .expect("buffer matches dimensions");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma16(buf)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_header_layout() {
        let d = DepthMap::new(2, 1, vec![1.5, -1.0]).unwrap();
        let b = encode_depth(&d);
        assert_eq!(b.len(), 16 + 8);
        assert_eq!(&b[..8], b"UPM2DPT1");
        assert_eq!(&b[8..16], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(decode_depth(&b).unwrap(), d);
        assert!(decode_depth(&b[..20]).is_err());
        assert!(decode_depth(b"UPM2DPT0\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn jsonl_reports_record_index() {
        let text = "{\"schema\":\"upm2/1\",\"left_label\":1,\"right_label\":1}\n{\"schema\":\"upm2/1\"}\n";
        let err = parse_jsonl::<TruthRecord>(text, Path::new("t.jsonl")).unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
    }

    #[test]
    fn channels_round_trip() {
        for c in [Channel::Geometry, Channel::Texture, Channel::Reference] {
            assert_eq!(parse_channel(c.as_str()), Some(c));
        }
        assert_eq!(parse_channel("other"), None);
    }
}
