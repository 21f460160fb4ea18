//! Territory statistics as JSON and CSV.

use renovor_core::voronoi::{RegionStats, PALETTE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region: usize,
    pub group: usize,
    pub color_slot: usize,
    pub color: String,
    pub voxels: usize,
    pub volume_mm3: f64,
    pub volume_ratio: f64,
    pub contact_area_mm2: f64,
    pub area_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub level_offset: i32,
    pub margin_mm: f64,
    pub tumor: bool,
    pub total_volume_mm3: f64,
    pub total_contact_area_mm2: f64,
    pub regions: Vec<RegionRow>,
}

impl StatsReport {
    pub fn new(stats: &[RegionStats], level_offset: i32, margin_mm: f64, tumor: bool) -> Self {
        let regions: Vec<RegionRow> = stats
            .iter()
            .map(|s| RegionRow {
                region: s.region,
                group: s.group,
                color_slot: PALETTE.iter().position(|&c| c == s.color).unwrap_or(0),
                color: s.color.to_string(),
                voxels: s.voxels,
                volume_mm3: s.volume_mm3,
                volume_ratio: s.volume_ratio,
                contact_area_mm2: s.contact_area_mm2,
                area_ratio: s.area_ratio,
            })
            .collect();
        StatsReport {
            level_offset,
            margin_mm,
            tumor,
            total_volume_mm3: regions.iter().map(|r| r.volume_mm3).sum(),
            total_contact_area_mm2: regions.iter().map(|r| r.contact_area_mm2).sum(),
            regions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_else(|_| unreachable!())
    }

    /// One row per region: id, color, volume, volume %, area, area %.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("region,color_slot,vol_mm3,vol_pct,area_mm2,area_pct\n");
        for r in &self.regions {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.region, r.color, r.volume_mm3, r.volume_ratio, r.contact_area_mm2, r.area_ratio
            ));
        }
        s
    }
}
