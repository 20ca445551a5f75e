//! Grayscale PNG input and output for single images.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use dualev_core::ImageTensor;

use crate::exit::CliError;

/// Loads a PNG as luminance in `[0, 1]`; colour channels are averaged and alpha is ignored.
pub fn read_png(path: &Path) -> Result<ImageTensor, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::validation(format!("cannot open image {}: {e}", path.display())))?;
    let bad = |e: png::DecodingError| CliError::validation(format!("cannot decode {}: {e}", path.display()));
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CliError::validation(format!("{} is too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let buf = &buf[..info.buffer_size()];

    let samples: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 65535.0)
            .collect(),
        _ => buf.iter().map(|&b| f64::from(b) / 255.0).collect(),
    };
    let (channels, colour) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(CliError::validation(format!("{}: unexpanded palette image", path.display())))
        }
    };
    let pixels = samples
        .chunks_exact(channels)
        .map(|px| px[..colour].iter().sum::<f64>() / colour as f64)
        .collect();
    Ok(ImageTensor::new(info.height as usize, info.width as usize, pixels)?)
}

/// Writes a 16-bit grayscale PNG.
pub fn write_png(path: &Path, image: &ImageTensor) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width() as u32, image.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let data: Vec<u8> = image
        .pixels()
        .iter()
        .flat_map(|&v| ((v * 65535.0).round() as u16).to_be_bytes())
        .collect();
    let io = |e: png::EncodingError| CliError::io(format!("cannot write {}: {e}", path.display()));
    let mut writer = encoder.write_header().map_err(io)?;
    writer.write_image_data(&data).map_err(io)?;
    writer.finish().map_err(io)
}
