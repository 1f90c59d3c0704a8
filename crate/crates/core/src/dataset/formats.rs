//! Byte-exact codecs for the per-frame payloads: PNG (rgb), PFM (depth and
//! normals), Middlebury `.flo` (flow) and binary little-endian PLY (clouds).
//! Float payloads are stored as float32.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::DatasetError;
use crate::render::{CloudFrame, FlowField, PointCloud, Raster};

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";
/// Middlebury convention: components above this mark unknown flow.
pub const FLO_UNKNOWN: f32 = 1e10;
const FLO_UNKNOWN_THRESHOLD: f32 = 1e9;

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, offset: usize, reason: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn encode_png(img: &Raster<[u8; 3]>) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        let flat: Vec<u8> = img.data.iter().flatten().copied().collect();
        writer.write_image_data(&flat).expect("in-memory PNG data");
    }
    out
}

pub fn decode_png(path: &Path, bytes: &[u8]) -> Result<Raster<[u8; 3]>, DatasetError> {
    let dec = png::Decoder::new(bytes);
    let mut reader = dec.read_info().map_err(|e| malformed(path, 0, format!("PNG: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| malformed(path, 0, format!("PNG: {e}")))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(malformed(path, 0, format!("expected 8-bit RGB, got {:?} {:?}", info.color_type, info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..w * h * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Raster { width: w, height: h, data })
}

/// PFM with `channels` of 1 ("Pf") or 3 ("PF"), little-endian (scale −1),
/// rows stored bottom to top as the format prescribes.
fn encode_pfm(width: usize, height: usize, channels: usize, values: &[f32]) -> Vec<u8> {
    let tag = if channels == 1 { "Pf" } else { "PF" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &values[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_pfm(path: &Path, bytes: &[u8], channels: usize) -> Result<(usize, usize, Vec<f32>), DatasetError> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<(String, usize), DatasetError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, start, format!("missing {what}")));
        }
        Ok((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), start))
    };
    let (tag, _) = token("PFM tag")?;
    let want = if channels == 1 { "Pf" } else { "PF" };
    if tag != want {
        return Err(malformed(path, 0, format!("expected PFM tag {want}, found {tag:?}")));
    }
    let (w, w_at) = token("width")?;
    let width: usize = w.parse().map_err(|_| malformed(path, w_at, "bad width"))?;
    let (h, h_at) = token("height")?;
    let height: usize = h.parse().map_err(|_| malformed(path, h_at, "bad height"))?;
    let (s, s_at) = token("scale")?;
    let scale: f64 = s.parse().map_err(|_| malformed(path, s_at, "bad scale"))?;
    if !(scale < 0.0) {
        return Err(malformed(path, s_at, "only little-endian PFM (negative scale) is supported"));
    }
    // Exactly one whitespace byte separates the header from the data.
    let body = pos + 1;
    let row = width * channels;
    let need = body + row * height * 4;
    if bytes.len() != need {
        return Err(malformed(path, bytes.len().min(need), format!("expected {need} bytes, found {}", bytes.len())));
    }
    let mut values = vec![0f32; row * height];
    for (i, chunk) in bytes[body..].chunks_exact(4).enumerate() {
        let (file_row, col) = (i / row, i % row);
        let y = height - 1 - file_row;
        values[y * row + col] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((width, height, values))
}

pub fn encode_depth(depth: &Raster<f64>) -> Vec<u8> {
    let v: Vec<f32> = depth.data.iter().map(|&d| d as f32).collect();
    encode_pfm(depth.width, depth.height, 1, &v)
}

pub fn decode_depth(path: &Path, bytes: &[u8]) -> Result<Raster<f64>, DatasetError> {
    let (w, h, v) = decode_pfm(path, bytes, 1)?;
    Ok(Raster {
        width: w,
        height: h,
        data: v.into_iter().map(f64::from).collect(),
    })
}

pub fn encode_normals(normals: &Raster<[f64; 3]>) -> Vec<u8> {
    let v: Vec<f32> = normals.data.iter().flat_map(|n| n.map(|c| c as f32)).collect();
    encode_pfm(normals.width, normals.height, 3, &v)
}

pub fn decode_normals(path: &Path, bytes: &[u8]) -> Result<Raster<[f64; 3]>, DatasetError> {
    let (w, h, v) = decode_pfm(path, bytes, 3)?;
    Ok(Raster {
        width: w,
        height: h,
        data: v.chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect(),
    })
}

/// Invalid pixels are written as [`FLO_UNKNOWN`] in both components.
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.flow.dims();
    let mut out = Vec::with_capacity(12 + w * h * 8);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (f, &ok) in flow.flow.data.iter().zip(&flow.valid.data) {
        let (u, v) = if ok { (f[0] as f32, f[1] as f32) } else { (FLO_UNKNOWN, FLO_UNKNOWN) };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(path: &Path, bytes: &[u8]) -> Result<FlowField, DatasetError> {
    if bytes.len() < 12 {
        return Err(malformed(path, bytes.len(), "truncated .flo header"));
    }
    if &bytes[0..4] != FLO_MAGIC {
        return Err(malformed(path, 0, format!("bad .flo magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(malformed(path, 4, format!("invalid .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + w * h * 8;
    if bytes.len() != need {
        return Err(malformed(path, bytes.len().min(need), format!("expected {need} bytes, found {}", bytes.len())));
    }
    let mut flow = Raster::filled(w, h, [0.0; 2]);
    let mut valid = Raster::filled(w, h, false);
    for (i, c) in bytes[12..].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(c[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(c[4..8].try_into().unwrap());
        if u.abs() > FLO_UNKNOWN_THRESHOLD || v.abs() > FLO_UNKNOWN_THRESHOLD || u.is_nan() || v.is_nan() {
            continue;
        }
        flow.data[i] = [u as f64, v as f64];
        valid.data[i] = true;
    }
    Ok(FlowField { flow, valid })
}

const PLY_PROPERTIES: &str = "property float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n";

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let frame = match cloud.frame {
        CloudFrame::Camera => "camera",
        CloudFrame::World => "world",
    };
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\ncomment frame {frame}\nelement vertex {}\n{PLY_PROPERTIES}end_header\n",
        cloud.len()
    )
    .into_bytes();
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        for k in 0..3 {
            out.extend_from_slice(&(p[k] as f32).to_le_bytes());
        }
        out.extend_from_slice(c);
    }
    out
}

/// Reads clouds written by [`encode_cloud`]; other property layouts are rejected.
pub fn decode_cloud(path: &Path, bytes: &[u8]) -> Result<PointCloud, DatasetError> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| malformed(path, 0, "PLY header has no end_header"))?
        + END.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed(path, 0, "PLY header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(malformed(path, 0, "missing ply magic"));
    }
    let mut count = None;
    let mut frame = CloudFrame::Camera;
    let mut props = String::new();
    let mut offset = 4;
    for line in lines {
        match line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["format", "binary_little_endian", "1.0"] | ["end_header"] => {}
            ["format", other, ..] => return Err(malformed(path, offset, format!("unsupported PLY format {other}"))),
            ["comment", "frame", "world"] => frame = CloudFrame::World,
            ["comment", ..] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| malformed(path, offset, "bad vertex count"))?),
            ["property", ..] => {
                props.push_str(line);
                props.push('\n');
            }
            _ => return Err(malformed(path, offset, format!("unexpected PLY header line {line:?}"))),
        }
        offset += line.len() + 1;
    }
    if props != PLY_PROPERTIES {
        return Err(malformed(path, 0, "PLY vertex properties must be float x,y,z and uchar red,green,blue"));
    }
    let n = count.ok_or_else(|| malformed(path, 0, "PLY header has no vertex element"))?;
    let need = end + n * 15;
    if bytes.len() != need {
        return Err(malformed(path, bytes.len().min(need), format!("expected {need} bytes, found {}", bytes.len())));
    }
    let mut points = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for rec in bytes[end..].chunks_exact(15) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        points.push(Point3::new(f(0), f(1), f(2)));
        colors.push([rec[12], rec[13], rec[14]]);
    }
    Ok(PointCloud { points, colors, frame })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("x")
    }

    #[test]
    fn zero_flow_2x2_is_44_bytes() {
        let f = FlowField {
            flow: Raster::filled(2, 2, [0.0; 2]),
            valid: Raster::filled(2, 2, true),
        };
        let b = encode_flow(&f);
        assert_eq!(b.len(), 4 + 4 + 4 + 8 * 4);
        assert_eq!(&b[0..4], b"PIEH");
        assert_eq!(f32::from_le_bytes(b[0..4].try_into().unwrap()), 202021.25);
        assert_eq!(&b[4..12], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert!(b[12..].iter().all(|&x| x == 0));
        assert_eq!(decode_flow(p(), &b).unwrap(), f);
    }

    #[test]
    fn flow_invalid_pixels_survive() {
        let mut f = FlowField {
            flow: Raster::filled(3, 2, [0.25, -1.5]),
            valid: Raster::filled(3, 2, true),
        };
        f.valid.set(1, 1, false);
        f.flow.set(1, 1, [0.0, 0.0]);
        assert_eq!(decode_flow(p(), &encode_flow(&f)).unwrap(), f);
    }

    #[test]
    fn flow_errors_report_offsets() {
        let mut b = encode_flow(&FlowField {
            flow: Raster::filled(2, 2, [0.0; 2]),
            valid: Raster::filled(2, 2, true),
        });
        b[0] = b'X';
        match decode_flow(p(), &b) {
            Err(DatasetError::Malformed { offset: 0, reason, .. }) => assert!(reason.contains("magic")),
            other => panic!("{other:?}"),
        }
        b[0] = b'P';
        b.truncate(30);
        match decode_flow(p(), &b) {
            Err(DatasetError::Malformed { offset: 30, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pfm_layout_and_round_trip() {
        let d = Raster::from_vec(2, 2, vec![1.0, 2.0, 3.0, f64::INFINITY]).unwrap();
        let b = encode_depth(&d);
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&b[..header.len()], header);
        // Bottom row first.
        assert_eq!(f32::from_le_bytes(b[header.len()..header.len() + 4].try_into().unwrap()), 3.0);
        assert_eq!(decode_depth(p(), &b).unwrap(), d);
        let n = Raster::from_vec(1, 2, vec![[0.0, 0.0, -1.0], [0.5, -0.25, 0.125]]).unwrap();
        assert_eq!(decode_normals(p(), &encode_normals(&n)).unwrap(), n);
        assert!(decode_normals(p(), &b).is_err());
        assert!(decode_depth(p(), &b[..b.len() - 1]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = Raster::from_vec(3, 1, vec![[1, 2, 3], [250, 128, 0], [9, 99, 199]]).unwrap();
        let b = encode_png(&img);
        assert_eq!(decode_png(p(), &b).unwrap(), img);
        assert_eq!(encode_png(&img), b);
    }

    #[test]
    fn ply_round_trip_and_header() {
        let c = PointCloud {
            points: vec![Point3::new(0.5, -0.25, 0.125), Point3::new(1.0, 2.0, 3.0)],
            colors: vec![[1, 2, 3], [255, 0, 128]],
            frame: CloudFrame::World,
        };
        let b = encode_cloud(&c);
        assert!(b.starts_with(b"ply\nformat binary_little_endian 1.0\n"));
        assert_eq!(decode_cloud(p(), &b).unwrap(), c);
        assert!(decode_cloud(p(), &b[..b.len() - 2]).is_err());
    }
}
