//! Progressive pooling of video-frame embedding grids.
//!
//! Frames are grouped with a fixed stride; the first frame of each group keeps
//! high spatial resolution while the rest are pooled coarsely. Pooling is
//! bilinear resampling of the G x G grid down to side ceil(G / stride) with
//! align-corners-false coordinate mapping, which preserves constants and
//! affine fields and reproduces the 27 -> 14 arithmetic at stride 2.

use crate::error::{Error, Result};

/// A single frame: a `side x side x channels` grid, row-major, channel
/// innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FrameGrid {
    pub fn new(side: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 || channels == 0 {
            return Err(Error::Argument("empty frame".into()));
        }
        if data.len() != side * side * channels {
            return Err(Error::Argument(format!(
                "frame data length {} does not match {side}x{side}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            side,
            channels,
            data,
        })
    }

    #[inline]
    fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.side + x) * self.channels + c]
    }
}

/// N frames of identical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEmbedding {
    pub frames: Vec<FrameGrid>,
    pub grid_size: usize,
    pub channels: usize,
}

impl VideoEmbedding {
    pub fn new(frames: Vec<FrameGrid>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Argument("video must contain at least one frame".into()))?;
        let (grid_size, channels) = (first.side, first.channels);
        for (i, f) in frames.iter().enumerate() {
            if f.side != grid_size || f.channels != channels {
                return Err(Error::Argument(format!(
                    "frame {i} geometry {}x{} does not match {grid_size}x{channels}",
                    f.side, f.channels
                )));
            }
        }
        Ok(Self {
            frames,
            grid_size,
            channels,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Grouping stride plus the two pooling strides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolingPlan {
    pub group_stride: usize,
    pub high_stride: usize,
    pub low_stride: usize,
    /// Single-stride pooling of every frame; group structure is ignored.
    pub uniform: bool,
}

impl PoolingPlan {
    pub fn uniform(stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Argument("stride must be positive".into()));
        }
        Ok(Self {
            group_stride: 1,
            high_stride: stride,
            low_stride: stride,
            uniform: true,
        })
    }

    pub fn grouped(group_stride: usize, high_stride: usize, low_stride: usize) -> Result<Self> {
        if group_stride == 0 || high_stride == 0 || low_stride == 0 {
            return Err(Error::Argument("strides must be positive".into()));
        }
        if high_stride > low_stride {
            return Err(Error::Argument(format!(
                "high_stride {high_stride} must not exceed low_stride {low_stride}"
            )));
        }
        Ok(Self {
            group_stride,
            high_stride,
            low_stride,
            uniform: false,
        })
    }
}

/// One pooled frame plus its position in the output layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFrame {
    pub frame_index: usize,
    pub group_index: usize,
    pub is_head: bool,
    pub grid: FrameGrid,
    /// Token index of this frame's first cell in the flattened sequence.
    pub token_offset: usize,
}

/// Pooled frames in input order with exact token accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSequence {
    pub frames: Vec<PooledFrame>,
    pub total_tokens: usize,
    pub channels: usize,
}

/// Output side length after pooling: `ceil(grid_size / stride)`.
pub fn pooled_side(grid_size: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Argument("stride must be positive".into()));
    }
    if grid_size == 0 {
        return Err(Error::Argument("grid_size must be positive".into()));
    }
    Ok(grid_size.div_ceil(stride))
}

/// Bilinear resample of a frame down to side `ceil(side / stride)`.
pub fn pool_frame(frame: &FrameGrid, stride: usize) -> Result<FrameGrid> {
    let src = frame.side;
    let dst = pooled_side(src, stride)?;
    if dst == src {
        return Ok(frame.clone());
    }
    let channels = frame.channels;
    let scale = src as f64 / dst as f64;
    // sample coordinates per output index, shared between rows and columns
    let coords: Vec<(usize, usize, f64)> = (0..dst)
        .map(|o| {
            let pos = (o as f64 + 0.5) * scale - 0.5;
            let pos = pos.clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect();
    // a + t*(b - a) rather than (1-t)*a + t*b: the difference form is exact
    // when a == b, so constant regions survive pooling bit-for-bit
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let mut data = vec![0.0; dst * dst * channels];
    for (oy, &(y0, y1, fy)) in coords.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in coords.iter().enumerate() {
            for c in 0..channels {
                let top = lerp(frame.at(y0, x0, c), frame.at(y0, x1, c), fx);
                let bot = lerp(frame.at(y1, x0, c), frame.at(y1, x1, c), fx);
                data[(oy * dst + ox) * channels + c] = lerp(top, bot, fy);
            }
        }
    }
    FrameGrid::new(dst, channels, data)
}

/// Consecutive groups of `group_stride` frame indices; the final group may be
/// shorter when the frame count does not divide evenly.
pub fn group_frames(num_frames: usize, group_stride: usize) -> Result<Vec<Vec<usize>>> {
    if group_stride == 0 {
        return Err(Error::Argument("group_stride must be positive".into()));
    }
    Ok((0..num_frames)
        .collect::<Vec<_>>()
        .chunks(group_stride)
        .map(|c| c.to_vec())
        .collect())
}

/// Pools every group head at `high_stride` and the remaining frames at
/// `low_stride`, preserving frame order.
pub fn progressive_pool(video: &VideoEmbedding, plan: &PoolingPlan) -> Result<PooledSequence> {
    let groups = if plan.uniform {
        // every frame is its own head
        group_frames(video.num_frames(), 1)?
    } else {
        group_frames(video.num_frames(), plan.group_stride)?
    };
    let mut frames = Vec::with_capacity(video.num_frames());
    let mut offset = 0usize;
    for (group_index, group) in groups.iter().enumerate() {
        for (j, &frame_index) in group.iter().enumerate() {
            let is_head = j == 0;
            let stride = if is_head {
                plan.high_stride
            } else {
                plan.low_stride
            };
            let grid = pool_frame(&video.frames[frame_index], stride)?;
            let tokens = grid.side * grid.side;
            frames.push(PooledFrame {
                frame_index,
                group_index,
                is_head,
                grid,
                token_offset: offset,
            });
            offset += tokens;
        }
    }
    Ok(PooledSequence {
        frames,
        total_tokens: offset,
        channels: video.channels,
    })
}

/// Closed-form output token count for a plan; matches
/// [`progressive_pool`]'s `total_tokens`.
pub fn token_count(num_frames: usize, grid_size: usize, plan: &PoolingPlan) -> Result<usize> {
    if num_frames == 0 {
        return Err(Error::Argument("num_frames must be positive".into()));
    }
    let high = pooled_side(grid_size, plan.high_stride)?.pow(2);
    if plan.uniform {
        return Ok(num_frames * high);
    }
    let low = pooled_side(grid_size, plan.low_stride)?.pow(2);
    let k = plan.group_stride;
    let full_groups = num_frames / k;
    let remainder = num_frames % k;
    let mut total = full_groups * (high + (k - 1) * low);
    if remainder > 0 {
        total += high + (remainder - 1) * low;
    }
    Ok(total)
}
