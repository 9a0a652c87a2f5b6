//! CSV and JSON files exchanged by the command line tool.
//!
//! A trajectory CSV has the header
//! `t,phi,x1,y1[,z1],vx1,vy1[,vz1],…,f,g,b,T,Lz,E[,extra…]`
//! and one row per sample. Floats are written with 17 significant digits so
//! that reading a file back reproduces every value bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characteristics::{characteristics, Configuration, MassSpec, PhaseState};
use crate::error::{Error, Result};
use crate::trajectory::SampledTrajectory;

const DERIVED: [&str; 6] = ["f", "g", "b", "T", "Lz", "E"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRow {
    pub f: f64,
    pub g: f64,
    pub b: f64,
    pub kinetic: f64,
    pub lz: f64,
    pub energy: f64,
}

impl DerivedRow {
    fn values(&self) -> [f64; 6] {
        [self.f, self.g, self.b, self.kinetic, self.lz, self.energy]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtraColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Trajectory samples together with their characteristics, as stored in CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub dim: usize,
    pub trajectory: SampledTrajectory,
    pub derived: Vec<DerivedRow>,
    pub extra: Vec<ExtraColumn>,
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

impl TrajectoryTable {
    pub fn from_trajectory(spec: &MassSpec, trajectory: &SampledTrajectory) -> Result<Self> {
        let first = trajectory
            .states
            .first()
            .ok_or_else(|| Error::InvalidParameter("trajectory has no samples".to_string()))?;
        let dim = first.dim();
        let derived = trajectory
            .states
            .iter()
            .map(|s| {
                if s.dim() != dim || s.len() != spec.len() {
                    return Err(Error::Mismatch("samples differ in shape".to_string()));
                }
                let c = characteristics(spec, s)?;
                Ok(DerivedRow {
                    f: c.f,
                    g: c.g,
                    b: c.b,
                    kinetic: c.kinetic,
                    lz: c.angular_momentum[2],
                    energy: c.energy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryTable {
            dim,
            trajectory: trajectory.clone(),
            derived,
            extra: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.trajectory.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn particles(&self) -> usize {
        self.trajectory.states.first().map_or(0, PhaseState::len)
    }

    /// Appends a named column; its length must match the number of rows.
    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Mismatch(format!(
                "column {name} has {} values for {} rows",
                values.len(),
                self.len()
            )));
        }
        if self.header().iter().any(|h| h == name) || name.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "column name {name:?} is taken or empty"
            )));
        }
        self.extra.push(ExtraColumn {
            name: name.to_string(),
            values,
        });
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.extra
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn header(&self) -> Vec<String> {
        let axes = &["x", "y", "z"][..self.dim];
        let mut header = vec!["t".to_string(), "phi".to_string()];
        for i in 1..=self.particles() {
            header.extend(axes.iter().map(|a| format!("{a}{i}")));
            header.extend(axes.iter().map(|a| format!("v{a}{i}")));
        }
        header.extend(DERIVED.iter().map(|s| s.to_string()));
        header.extend(self.extra.iter().map(|c| c.name.clone()));
        header
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.header()).map_err(csv_error)?;
        let traj = &self.trajectory;
        for (row, state) in traj.states.iter().enumerate() {
            let mut record = vec![format_float(traj.times[row]), format_float(traj.phis[row])];
            for i in 0..state.len() {
                record.extend(state.config.position(i).iter().copied().map(format_float));
                record.extend(state.velocity(i).iter().copied().map(format_float));
            }
            record.extend(self.derived[row].values().into_iter().map(format_float));
            record.extend(self.extra.iter().map(|c| format_float(c.values[row])));
            writer.write_record(&record).map_err(csv_error)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let (dim, n) = parse_header(&header)?;
        let fixed = 2 + 2 * dim * n + DERIVED.len();
        let mut table = TrajectoryTable {
            dim,
            trajectory: SampledTrajectory {
                times: Vec::new(),
                phis: Vec::new(),
                states: Vec::new(),
            },
            derived: Vec::new(),
            extra: header[fixed..]
                .iter()
                .map(|name| ExtraColumn {
                    name: name.clone(),
                    values: Vec::new(),
                })
                .collect(),
        };
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(csv_error)?;
            let values = record
                .iter()
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|_| {
                        Error::Csv(format!(
                            "row {}: cannot parse {field:?} as a number",
                            line + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != header.len() {
                return Err(Error::Csv(format!(
                    "row {} has {} fields",
                    line + 1,
                    values.len()
                )));
            }
            let mut positions = Vec::with_capacity(dim * n);
            let mut velocities = Vec::with_capacity(dim * n);
            for i in 0..n {
                let base = 2 + 2 * dim * i;
                positions.extend_from_slice(&values[base..base + dim]);
                velocities.extend_from_slice(&values[base + dim..base + 2 * dim]);
            }
            let config = Configuration::from_flat(dim, positions)?;
            table.trajectory.times.push(values[0]);
            table.trajectory.phis.push(values[1]);
            table
                .trajectory
                .states
                .push(PhaseState::new(config, velocities)?);
            let d = &values[fixed - DERIVED.len()..fixed];
            table.derived.push(DerivedRow {
                f: d[0],
                g: d[1],
                b: d[2],
                kinetic: d[3],
                lz: d[4],
                energy: d[5],
            });
            for (column, v) in table.extra.iter_mut().zip(&values[fixed..]) {
                column.values.push(*v);
            }
        }
        if table.is_empty() {
            return Err(Error::Csv("no data rows".to_string()));
        }
        Ok(table)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::read_csv(s.as_bytes())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Particle count and dimension implied by a header.
fn parse_header(header: &[String]) -> Result<(usize, usize)> {
    let bad = |why: &str| Error::Csv(format!("unexpected header: {why}"));
    if header.len() < 2 || header[0] != "t" || header[1] != "phi" {
        return Err(bad("must start with t,phi"));
    }
    let dim = match header.get(4).map(String::as_str) {
        Some("z1") => 3,
        Some("vx1") => 2,
        _ => return Err(bad("no particle columns")),
    };
    let axes = &["x", "y", "z"][..dim];
    let mut n = 0;
    loop {
        let base = 2 + 2 * dim * n;
        let expected: Vec<String> = axes
            .iter()
            .map(|a| format!("{a}{}", n + 1))
            .chain(axes.iter().map(|a| format!("v{a}{}", n + 1)))
            .collect();
        match header.get(base..base + 2 * dim) {
            Some(names) if names == expected.as_slice() => n += 1,
            _ => break,
        }
    }
    let base = 2 + 2 * dim * n;
    if n == 0
        || header
            .get(base..base + DERIVED.len())
            .is_none_or(|d| d != DERIVED)
    {
        return Err(bad("particle block must be followed by f,g,b,T,Lz,E"));
    }
    Ok((dim, n))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{sample, Grid, TrajectorySpec};

    fn table() -> TrajectoryTable {
        let spec = MassSpec::unit_gravity(vec![1.0, 2.0, 3.0]).unwrap();
        let seed = crate::lagrange::lagrange_solution(&spec, 0.5)
            .unwrap()
            .config;
        let orbit = TrajectorySpec::pulsating(spec.clone(), seed, 0.5, 0.8).unwrap();
        let traj = sample(&orbit, 7, 1.0, Grid::Time).unwrap();
        TrajectoryTable::from_trajectory(&spec, &traj).unwrap()
    }

    #[test]
    fn header_layout() {
        let t = table();
        let h = t.header();
        assert_eq!(h[..6], ["t", "phi", "x1", "y1", "vx1", "vy1"]);
        assert_eq!(h.len(), 2 + 12 + 6);
        assert_eq!(h[h.len() - 6..], DERIVED);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut t = table();
        t.push_column(
            "ratio",
            (0..t.len()).map(|k| 1.0 + k as f64 / 3.0).collect(),
        )
        .unwrap();
        let text = t.to_csv_string().unwrap();
        let back = TrajectoryTable::from_csv_str(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv_string().unwrap(), text);
    }

    #[test]
    fn three_dimensional_header() {
        let t = table();
        let mut t3 = t.clone();
        t3.dim = 3;
        t3.trajectory.states = t.trajectory.states.iter().map(PhaseState::to_3d).collect();
        let text = t3.to_csv_string().unwrap();
        assert!(text.starts_with("t,phi,x1,y1,z1,vx1,vy1,vz1,x2"));
        assert_eq!(TrajectoryTable::from_csv_str(&text).unwrap(), t3);
    }

    #[test]
    fn malformed_input() {
        assert!(TrajectoryTable::from_csv_str("a,b\n1,2\n").is_err());
        assert!(TrajectoryTable::from_csv_str("t,phi,x1,y1,vx1,vy1,f,g,b,T,Lz,E\n").is_err());
        let text = table()
            .to_csv_string()
            .unwrap()
            .replacen("e0,", "e0,oops,", 1);
        assert!(TrajectoryTable::from_csv_str(&text).is_err());
    }

    #[test]
    fn duplicate_column_rejected() {
        let mut t = table();
        assert!(t.push_column("g", vec![0.0; t.len()]).is_err());
        assert!(t.push_column("ratio", vec![0.0]).is_err());
    }
}
