//! Training energy and CO2 estimates from FLOPs, device Watt-to-FLOPS
//! ratios and GPU hours.
//!
//! Power draw is `flops * (omega_gpu + omega_cpu) * gpu_hours` in Wh, taken
//! literally; emissions convert Wh to kWh before applying a tonnes-per-kWh
//! intensity.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::ModelRecord;

/// US EPA grid carbon intensity, metric tonnes CO2 per kWh.
pub const EPA_TONNES_PER_KWH: f64 = 0.707e-3;

/// CPU Watt-to-FLOPS ratio used when neither the database nor the caller supplies one.
pub const DEFAULT_CPU_WATT_PER_FLOP: f64 = 1.0e-11;

/// Hardware table shipped with the crate.
pub const BUNDLED_HARDWARE_DB: &str = include_str!("../data/hardware.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuSpec {
    pub name: String,
    pub tdp_watts: f64,
    pub peak_flops: f64,
}

impl GpuSpec {
    pub fn new(name: impl Into<String>, tdp_watts: f64, peak_flops: f64) -> Result<Self> {
        let name = name.into();
        if !(tdp_watts > 0.0 && tdp_watts.is_finite()) {
            return Err(Error::Validation(format!(
                "{name}: tdp_watts must be > 0, got {tdp_watts}"
            )));
        }
        if !(peak_flops > 0.0 && peak_flops.is_finite()) {
            return Err(Error::Validation(format!(
                "{name}: peak_flops must be > 0, got {peak_flops}"
            )));
        }
        Ok(GpuSpec {
            name,
            tdp_watts,
            peak_flops,
        })
    }
}

/// Watts per FLOP/s of sustained throughput.
pub fn watt_per_flop(spec: &GpuSpec) -> f64 {
    spec.tdp_watts / spec.peak_flops
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WattPerFlop {
    omega_g: f64,
    omega_c: f64,
}

impl WattPerFlop {
    pub fn new(omega_g: f64, omega_c: f64) -> Result<Self> {
        for (name, v) in [("GPU", omega_g), ("CPU", omega_c)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} Watt-to-FLOPS ratio must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(WattPerFlop { omega_g, omega_c })
    }

    pub fn gpu(&self) -> f64 {
        self.omega_g
    }

    pub fn cpu(&self) -> f64 {
        self.omega_c
    }

    pub fn combined(&self) -> f64 {
        self.omega_g + self.omega_c
    }
}

/// Training power draw in watt-hours.
pub fn power_draw(flops: f64, ratios: WattPerFlop, gpu_hours: f64) -> Result<f64> {
    if !(flops >= 0.0 && flops.is_finite()) {
        return Err(Error::Validation(format!(
            "flops must be finite and >= 0, got {flops}"
        )));
    }
    if !(gpu_hours >= 0.0 && gpu_hours.is_finite()) {
        return Err(Error::Validation(format!(
            "gpu_hours must be finite and >= 0, got {gpu_hours}"
        )));
    }
    Ok(flops * ratios.combined() * gpu_hours)
}

/// CO2 in metric tonnes for `watt_hours` at `tonnes_per_kwh`.
pub fn co2_emissions(watt_hours: f64, tonnes_per_kwh: f64) -> Result<f64> {
    if !(tonnes_per_kwh > 0.0 && tonnes_per_kwh.is_finite()) {
        return Err(Error::Config(format!(
            "carbon intensity must be > 0 t/kWh, got {tonnes_per_kwh}"
        )));
    }
    if !(watt_hours >= 0.0 && watt_hours.is_finite()) {
        return Err(Error::Validation(format!(
            "power draw must be finite and >= 0 Wh, got {watt_hours}"
        )));
    }
    Ok((watt_hours / 1000.0) * tonnes_per_kwh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonConfig {
    pub cpu_watt_per_flop: f64,
    pub tonnes_per_kwh: f64,
}

impl Default for CarbonConfig {
    fn default() -> Self {
        CarbonConfig {
            cpu_watt_per_flop: DEFAULT_CPU_WATT_PER_FLOP,
            tonnes_per_kwh: EPA_TONNES_PER_KWH,
        }
    }
}

impl CarbonConfig {
    /// Defaults, with the CPU ratio taken from the database's reference CPU when present.
    pub fn from_db(db: &HardwareDb) -> Self {
        CarbonConfig {
            cpu_watt_per_flop: db
                .reference_cpu()
                .map_or(DEFAULT_CPU_WATT_PER_FLOP, watt_per_flop),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonEstimate {
    pub power_wh: f64,
    pub co2_tonnes: f64,
    pub tonnes_per_kwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Gpu,
    Cpu,
}

#[derive(Debug, Deserialize)]
struct DbFile {
    #[serde(default)]
    device: Vec<DeviceEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    name: String,
    kind: DeviceKind,
    tdp_watts: f64,
    peak_flops: f64,
    #[serde(default)]
    source: Option<String>,
}

/// Read-only table of device power and throughput figures.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareDb {
    gpus: Vec<(GpuSpec, Option<String>)>,
    cpu: Option<GpuSpec>,
}

impl HardwareDb {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_HARDWARE_DB).expect("bundled hardware database is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: DbFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("hardware database: {e}")))?;
        let mut gpus: Vec<(GpuSpec, Option<String>)> = Vec::new();
        let mut cpu = None;
        for entry in file.device {
            let spec = GpuSpec::new(entry.name, entry.tdp_watts, entry.peak_flops)?;
            match entry.kind {
                DeviceKind::Gpu => {
                    if gpus
                        .iter()
                        .any(|(g, _)| g.name.eq_ignore_ascii_case(&spec.name))
                    {
                        return Err(Error::Config(format!(
                            "duplicate GPU entry '{}'",
                            spec.name
                        )));
                    }
                    gpus.push((spec, entry.source));
                }
                DeviceKind::Cpu => {
                    if cpu.is_some() {
                        return Err(Error::Config("more than one reference CPU entry".into()));
                    }
                    cpu = Some(spec);
                }
            }
        }
        Ok(HardwareDb { gpus, cpu })
    }

    /// Case-insensitive lookup by GPU name.
    pub fn gpu(&self, name: &str) -> Result<&GpuSpec> {
        let wanted = name.trim();
        self.gpus
            .iter()
            .map(|(g, _)| g)
            .find(|g| g.name.eq_ignore_ascii_case(wanted))
            .ok_or_else(|| Error::UnknownGpu {
                name: name.to_string(),
                known: self.gpu_names(),
            })
    }

    pub fn source_note(&self, name: &str) -> Option<&str> {
        self.gpus
            .iter()
            .find(|(g, _)| g.name.eq_ignore_ascii_case(name.trim()))
            .and_then(|(_, s)| s.as_deref())
    }

    pub fn gpu_names(&self) -> Vec<String> {
        self.gpus.iter().map(|(g, _)| g.name.clone()).collect()
    }

    pub fn reference_cpu(&self) -> Option<&GpuSpec> {
        self.cpu.as_ref()
    }
}

/// Power and CO2 for one surveyed model.
pub fn estimate_record(
    record: &ModelRecord,
    hardware: &HardwareDb,
    config: &CarbonConfig,
) -> Result<CarbonEstimate> {
    let gpu = hardware.gpu(&record.gpu_type)?;
    let ratios = WattPerFlop::new(watt_per_flop(gpu), config.cpu_watt_per_flop)?;
    let power_wh = power_draw(record.flops, ratios, record.gpu_hours)?;
    let co2_tonnes = co2_emissions(power_wh, config.tonnes_per_kwh)?;
    Ok(CarbonEstimate {
        power_wh,
        co2_tonnes,
        tonnes_per_kwh: config.tonnes_per_kwh,
    })
}
