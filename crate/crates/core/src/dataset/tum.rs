use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use super::trajectory::{associate_stamps, parse_trajectory, Trajectory, TrajectorySample};
use super::{io_err, parse_err, DatasetError};
use crate::image::{ColorImage, DepthImage, Image};

/// Raw 16-bit depth units per meter.
pub const DEPTH_SCALE: f64 = 5000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    pub timestamp: f64,
    pub depth_path: PathBuf,
    pub color_path: PathBuf,
    pub ground_truth: Option<crate::math::RigidTransform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TumDataset {
    pub root: PathBuf,
    pub frames: Vec<DatasetFrame>,
    pub ground_truth: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumOptions {
    pub assoc_tolerance: f64,
    pub depth_scale: f64,
    /// Depths beyond this are treated as missing, meters.
    pub max_depth: f64,
}

impl Default for TumOptions {
    fn default() -> Self {
        Self { assoc_tolerance: 0.02, depth_scale: DEPTH_SCALE, max_depth: 8.0 }
    }
}

fn read_list(path: &Path) -> Result<Vec<(f64, PathBuf)>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<(f64, PathBuf)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(ts), Some(file), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, i + 1, "expected `timestamp filename`"));
        };
        let ts: f64 = ts.parse().map_err(|e| parse_err(path, i + 1, format!("bad timestamp: {e}")))?;
        if !ts.is_finite() {
            return Err(parse_err(path, i + 1, "non-finite timestamp"));
        }
        if out.last().is_some_and(|(prev, _)| ts <= *prev) {
            return Err(parse_err(path, i + 1, "timestamps must increase"));
        }
        out.push((ts, dir.join(file)));
    }
    Ok(out)
}

/// Reads `depth.txt`, `rgb.txt` and optionally `groundtruth.txt` under `root`
/// and pairs depth with color images by nearest timestamp.
pub fn load_tum_dataset(root: &Path, opts: &TumOptions) -> Result<TumDataset, DatasetError> {
    let depth = read_list(&root.join("depth.txt"))?;
    let color = read_list(&root.join("rgb.txt"))?;
    let gt_path = root.join("groundtruth.txt");
    let ground_truth = if gt_path.exists() {
        let text = std::fs::read_to_string(&gt_path).map_err(io_err(&gt_path))?;
        parse_trajectory(&text, &gt_path)?
    } else {
        Vec::new()
    };
    let d_ts: Vec<f64> = depth.iter().map(|d| d.0).collect();
    let c_ts: Vec<f64> = color.iter().map(|c| c.0).collect();
    let gt_ts: Vec<f64> = ground_truth.iter().map(|g| g.timestamp).collect();
    let gt_pairs = associate_stamps(&d_ts, &gt_ts, opts.assoc_tolerance);
    let frames = associate_stamps(&d_ts, &c_ts, opts.assoc_tolerance)
        .into_iter()
        .map(|(i, j)| DatasetFrame {
            timestamp: depth[i].0,
            depth_path: depth[i].1.clone(),
            color_path: color[j].1.clone(),
            ground_truth: gt_pairs.iter().find(|(di, _)| *di == i).map(|(_, g)| ground_truth[*g].pose),
        })
        .collect();
    Ok(TumDataset { root: root.to_path_buf(), frames, ground_truth })
}

fn image_err(path: &Path, msg: impl ToString) -> DatasetError {
    DatasetError::Image { path: path.to_path_buf(), msg: msg.to_string() }
}

fn decode(path: &Path) -> Result<(png::OutputInfo, Vec<u8>), DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| image_err(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// 16-bit single-channel PNG to meters; zero and values beyond `max_depth`
/// become missing (0).
pub fn read_depth_png(path: &Path, depth_scale: f64, max_depth: f64) -> Result<DepthImage, DatasetError> {
    let (info, buf) = decode(path)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(image_err(path, format!("expected 16-bit grayscale, got {:?} {:?}", info.color_type, info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf
        .chunks_exact(2)
        .map(|b| {
            let d = u16::from_be_bytes([b[0], b[1]]) as f64 / depth_scale;
            if d > max_depth {
                0.0
            } else {
                d
            }
        })
        .collect();
    Ok(Image::from_vec(w, h, data))
}

/// 8-bit RGB, RGBA or grayscale PNG to RGB.
pub fn read_color_png(path: &Path) -> Result<ColorImage, DatasetError> {
    let (info, buf) = decode(path)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(image_err(path, format!("expected 8-bit color, got {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<[u8; 3]> = match info.color_type {
        png::ColorType::Rgb => buf.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Rgba => buf.chunks_exact(4).map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().map(|g| [*g; 3]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|g| [g[0]; 3]).collect(),
        other => return Err(image_err(path, format!("unsupported color type {other:?}"))),
    };
    Ok(Image::from_vec(w, h, data))
}

pub fn write_depth_png(path: &Path, depth: &DepthImage, depth_scale: f64) -> Result<(), DatasetError> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = png::Encoder::new(&mut file, depth.width as u32, depth.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    let bytes: Vec<u8> = depth
        .data
        .iter()
        .flat_map(|d| ((d * depth_scale).round().clamp(0.0, u16::MAX as f64) as u16).to_be_bytes())
        .collect();
    writer.write_image_data(&bytes).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

pub fn write_color_png(path: &Path, color: &ColorImage) -> Result<(), DatasetError> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = png::Encoder::new(&mut file, color.width as u32, color.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    let bytes: Vec<u8> = color.data.iter().flatten().copied().collect();
    writer.write_image_data(&bytes).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

/// Writes frames in TUM layout (`depth/`, `rgb/`, the three list files) so
/// the regular loader can read them back.
pub fn write_tum_sequence(
    root: &Path,
    frames: &[(f64, DepthImage, ColorImage)],
    ground_truth: &[TrajectorySample],
) -> Result<(), DatasetError> {
    for sub in ["depth", "rgb"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut depth_list = String::from("# depth maps\n# timestamp filename\n");
    let mut rgb_list = String::from("# color images\n# timestamp filename\n");
    for (ts, depth, color) in frames {
        let name = format!("{ts:.6}.png");
        write_depth_png(&root.join("depth").join(&name), depth, DEPTH_SCALE)?;
        write_color_png(&root.join("rgb").join(&name), color)?;
        depth_list.push_str(&format!("{ts:.6} depth/{name}\n"));
        rgb_list.push_str(&format!("{ts:.6} rgb/{name}\n"));
    }
    let write = |name: &str, text: &str| {
        let p = root.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))
    };
    write("depth.txt", &depth_list)?;
    write("rgb.txt", &rgb_list)?;
    if !ground_truth.is_empty() {
        let mut gt = String::from("# ground truth trajectory\n# timestamp tx ty tz qx qy qz qw\n");
        gt.push_str(&super::trajectory::format_trajectory(ground_truth));
        write("groundtruth.txt", &gt)?;
    }
    Ok(())
}
