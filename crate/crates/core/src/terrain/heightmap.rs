use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{GapWorld, TerrainError};

pub const HEIGHTMAP_ROWS: usize = 48;
pub const HEIGHTMAP_COLS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightmapParams {
    /// Cell pitch, m.
    pub pitch: f64,
    /// Forward offset of the first row's near edge from the body, m.
    pub x_start: f64,
    /// Height reported for cells over a gap, m.
    pub gap_sentinel: f64,
}

impl Default for HeightmapParams {
    fn default() -> Self {
        Self {
            pitch: 0.025,
            x_start: -0.3,
            gap_sentinel: -1.0,
        }
    }
}

/// Body-centred, yaw-aligned elevation grid. Row `i` runs along the body's
/// forward axis, column `j` along its left axis (column 7 is centred).
#[derive(Debug, Clone, PartialEq)]
pub struct HeightmapWindow {
    pub params: HeightmapParams,
    pub cells: [[f64; HEIGHTMAP_COLS]; HEIGHTMAP_ROWS],
}

impl HeightmapWindow {
    pub fn sample(world: &GapWorld, body_x: f64, body_y: f64, yaw: f64, params: &HeightmapParams) -> Self {
        let (s, c) = yaw.sin_cos();
        let mut cells = [[0.0; HEIGHTMAP_COLS]; HEIGHTMAP_ROWS];
        for (i, row) in cells.iter_mut().enumerate() {
            let fx = params.x_start + (i as f64 + 0.5) * params.pitch;
            for (j, cell) in row.iter_mut().enumerate() {
                let fy = (j as f64 - (HEIGHTMAP_COLS / 2) as f64) * params.pitch;
                let wx = body_x + c * fx - s * fy;
                let wy = body_y + s * fx + c * fy;
                *cell = match world.height_at(wx, wy) {
                    super::TerrainSample::Flat { height } => height,
                    super::TerrainSample::Gap => params.gap_sentinel,
                };
            }
        }
        Self { params: *params, cells }
    }

    /// Forward distance of row `i`'s centre from the body.
    pub fn row_offset(&self, i: usize) -> f64 {
        self.params.x_start + (i as f64 + 0.5) * self.params.pitch
    }

    /// Row containing forward offset `fx`, if inside the window.
    pub fn row_at(&self, fx: f64) -> Option<usize> {
        let i = ((fx - self.params.x_start) / self.params.pitch).floor();
        (i >= 0.0 && (i as usize) < HEIGHTMAP_ROWS).then_some(i as usize)
    }

    pub fn is_gap_cell(&self, i: usize, j: usize) -> bool {
        self.cells[i][j] <= self.params.gap_sentinel
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TerrainError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.cells {
            w.write_record(row.iter().map(|v| format!("{v}")))
                .map_err(|e| TerrainError::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{Segment, SegmentKind};

    #[test]
    fn gap_cells_carry_sentinel() {
        let world = GapWorld::from_segments(
            vec![
                Segment { kind: SegmentKind::Flat, width: 1.5 },
                Segment { kind: SegmentKind::Gap, width: 0.2 },
                Segment { kind: SegmentKind::Flat, width: 2.0 },
            ],
            -1.0,
            0,
        )
        .unwrap();
        let p = HeightmapParams::default();
        let hm = HeightmapWindow::sample(&world, 0.2, 0.0, 0.0, &p);
        // Gap spans world x in (0.5, 0.7) -> forward offsets (0.3, 0.5).
        for i in 0..HEIGHTMAP_ROWS {
            let fx = hm.row_offset(i);
            let expect_gap = fx > 0.3 && fx < 0.5;
            for j in 0..HEIGHTMAP_COLS {
                assert_eq!(hm.is_gap_cell(i, j), expect_gap, "row {i}");
            }
        }
        assert_eq!(hm.row_at(p.x_start + 0.001), Some(0));
        assert_eq!(hm.row_at(p.x_start - 0.001), None);
        assert_eq!(hm.row_at(p.x_start + 48.0 * p.pitch + 0.001), None);
    }

    #[test]
    fn csv_export_has_grid_shape() {
        let hm = HeightmapWindow::sample(&GapWorld::flat(10.0), 0.0, 0.0, 0.0, &HeightmapParams::default());
        let mut buf = Vec::new();
        hm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), HEIGHTMAP_ROWS);
        assert!(text.lines().all(|l| l.split(',').count() == HEIGHTMAP_COLS));
    }
}
