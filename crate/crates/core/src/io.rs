//! CSV logs: IMU, encoder, ground-truth and estimate traces.
//!
//! Every file starts with a fixed header. Numbers are written with 17 significant
//! digits so that a write/read round trip is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::filter::{quaternion_wxyz, TraceRecord};
use crate::kinematics::JointState;
use crate::liegroup::{Mat3, Vec3, Vec9, SE23};
use crate::models::{ImuFrame, ImuSample};
use crate::report::RmseRecord;
use crate::sim::GroundTruthRecord;
use crate::streams::SensorLog;

pub const ROBOT_IMU_FILE: &str = "imu_robot.csv";
pub const GROUND_IMU_FILE: &str = "imu_ground.csv";
pub const ENCODER_FILE: &str = "encoders.csv";
pub const TRUTH_FILE: &str = "truth.csv";

pub const IMU_HEADER: [&str; 7] = ["t", "wx", "wy", "wz", "ax", "ay", "az"];

const POSE_COLUMNS: [&str; 10] = ["qw", "qx", "qy", "qz", "vx", "vy", "vz", "px", "py", "pz"];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn truth_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(POSE_COLUMNS.iter().map(|c| c.to_string()));
    for prefix in ["dW", "bW"] {
        h.extend(POSE_COLUMNS.iter().map(|c| format!("{prefix}{c}")));
    }
    h.extend(["footx", "footy", "footz"].map(String::from));
    h
}

pub fn trace_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(POSE_COLUMNS.iter().map(|c| c.to_string()));
    h.extend((1..=9).map(|i| format!("P{i}{i}")));
    h.push("innov_norm".into());
    h
}

pub fn encoder_header(joints: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=joints).map(|i| format!("q{i}")));
    h.extend((1..=joints).map(|i| format!("qd{i}")));
    h
}

/// Rows of a parsed CSV, each with its 1-based line number.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<f64>)>,
}

impl Table {
    fn parse(reader: impl Read, path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            None => return Err(parse_err(1, "missing header row".into())),
            Some(r) => r
                .map_err(|e| parse_err(csv_line(&e), e.to_string()))?
                .iter()
                .map(|s| s.trim().to_string())
                .collect::<Vec<_>>(),
        };
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            let mut vals = Vec::with_capacity(rec.len());
            for (field, name) in rec.iter().zip(&header) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, format!("column {name}: cannot parse {field:?} as a number")))?;
                vals.push(v);
            }
            rows.push((line, vals));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn expect_header(&self, want: &[String]) -> Result<()> {
        if self.header != want {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: 1,
                message: format!("expected header {:?}, found {:?}", want.join(","), self.header.join(",")),
            });
        }
        Ok(())
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn vec3(v: &[f64]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

/// Rotation from a `(w, x, y, z)` quaternion, which must be close to unit norm.
fn rotation(table: &Table, line: u64, q: &[f64]) -> Result<Mat3> {
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    let n = quat.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(table.err(line, format!("quaternion norm {n} is not 1")));
    }
    Ok(UnitQuaternion::from_quaternion(quat).to_rotation_matrix().into_inner())
}

fn pose_fields(rot: &Mat3, vel: &Vec3, pos: &Vec3) -> impl Iterator<Item = String> {
    let q = quaternion_wxyz(rot);
    q.into_iter()
        .chain(vel.iter().copied())
        .chain(pos.iter().copied())
        .map(fmt)
        .collect::<Vec<_>>()
        .into_iter()
}

fn write_rows<W: Write>(out: W, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_file(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(std::io::BufWriter::new(file), header, rows).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::fault(format!("{}: {other:?}", path.display())),
    })
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let header: Vec<String> = IMU_HEADER.iter().map(|s| s.to_string()).collect();
    write_file(
        path,
        &header,
        samples.iter().map(|s| {
            std::iter::once(s.t)
                .chain(s.omega.iter().copied())
                .chain(s.accel.iter().copied())
                .map(fmt)
                .collect()
        }),
    )
}

pub fn parse_imu(reader: impl Read, path: &Path, frame: ImuFrame) -> Result<Vec<ImuSample>> {
    let table = Table::parse(reader, path)?;
    let header: Vec<String> = IMU_HEADER.iter().map(|s| s.to_string()).collect();
    table.expect_header(&header)?;
    Ok(table
        .rows
        .iter()
        .map(|(_, v)| ImuSample::new(v[0], vec3(&v[1..4]), vec3(&v[4..7]), frame))
        .collect())
}

pub fn read_imu(path: &Path, frame: ImuFrame) -> Result<Vec<ImuSample>> {
    parse_imu(open(path)?, path, frame)
}

pub fn write_encoders(path: &Path, samples: &[JointState]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.q.len());
    if let Some(i) = samples.iter().position(|s| s.q.len() != n || s.qdot.len() != n) {
        return Err(Error::arg(format!("encoder sample {i} has a different joint count")));
    }
    write_file(
        path,
        &encoder_header(n),
        samples.iter().map(|s| {
            std::iter::once(s.t)
                .chain(s.q.iter().copied())
                .chain(s.qdot.iter().copied())
                .map(fmt)
                .collect()
        }),
    )
}

pub fn parse_encoders(reader: impl Read, path: &Path) -> Result<Vec<JointState>> {
    let table = Table::parse(reader, path)?;
    let cols = table.header.len();
    if cols < 3 || cols % 2 == 0 {
        return Err(table.err(1, format!("encoder header needs t plus q/qd pairs, found {cols} columns")));
    }
    let n = (cols - 1) / 2;
    table.expect_header(&encoder_header(n))?;
    Ok(table
        .rows
        .iter()
        .map(|(_, v)| {
            JointState::new(
                v[0],
                DVector::from_column_slice(&v[1..1 + n]),
                DVector::from_column_slice(&v[1 + n..]),
            )
        })
        .collect())
}

pub fn read_encoders(path: &Path) -> Result<Vec<JointState>> {
    parse_encoders(open(path)?, path)
}

pub fn write_truth(path: &Path, records: &[GroundTruthRecord]) -> Result<()> {
    write_file(
        path,
        &truth_header(),
        records.iter().map(|r| {
            std::iter::once(fmt(r.t))
                .chain(pose_fields(&r.rel.rot, &r.rel.vel, &r.rel.pos))
                .chain(pose_fields(&r.ground_rot, &r.ground_vel, &r.ground_pos))
                .chain(pose_fields(&r.robot_rot, &r.robot_vel, &r.robot_pos))
                .chain(r.foot.iter().copied().map(fmt))
                .collect()
        }),
    )
}

pub fn parse_truth(reader: impl Read, path: &Path) -> Result<Vec<GroundTruthRecord>> {
    let table = Table::parse(reader, path)?;
    table.expect_header(&truth_header())?;
    table
        .rows
        .iter()
        .map(|(line, v)| {
            let rel_rot = rotation(&table, *line, &v[1..5])?;
            let ground_rot = rotation(&table, *line, &v[11..15])?;
            let robot_rot = rotation(&table, *line, &v[21..25])?;
            Ok(GroundTruthRecord {
                t: v[0],
                rel: SE23::new(rel_rot, vec3(&v[5..8]), vec3(&v[8..11])),
                ground_rot,
                ground_vel: vec3(&v[15..18]),
                ground_pos: vec3(&v[18..21]),
                robot_rot,
                robot_vel: vec3(&v[25..28]),
                robot_pos: vec3(&v[28..31]),
                foot: vec3(&v[31..34]),
            })
        })
        .collect()
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    parse_truth(open(path)?, path)
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_file(
        path,
        &trace_header(),
        records.iter().map(|r| {
            std::iter::once(fmt(r.t))
                .chain(pose_fields(&r.rot, &r.vel, &r.pos))
                .chain(r.cov_diag.iter().copied().map(fmt))
                .chain(std::iter::once(fmt(r.innovation_norm)))
                .collect()
        }),
    )
}

pub fn parse_trace(reader: impl Read, path: &Path) -> Result<Vec<TraceRecord>> {
    let table = Table::parse(reader, path)?;
    table.expect_header(&trace_header())?;
    table
        .rows
        .iter()
        .map(|(line, v)| {
            Ok(TraceRecord {
                t: v[0],
                rot: rotation(&table, *line, &v[1..5])?,
                vel: vec3(&v[5..8]),
                pos: vec3(&v[8..11]),
                cov_diag: Vec9::from_column_slice(&v[11..20]),
                innovation_norm: v[20],
            })
        })
        .collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    parse_trace(open(path)?, path)
}

/// Writes the three sensor streams into `dir`.
pub fn write_log(dir: &Path, log: &SensorLog) -> Result<()> {
    write_imu(&dir.join(ROBOT_IMU_FILE), &log.robot_imu)?;
    write_imu(&dir.join(GROUND_IMU_FILE), &log.ground_imu)?;
    write_encoders(&dir.join(ENCODER_FILE), &log.encoders)
}

pub fn read_log(dir: &Path) -> Result<SensorLog> {
    Ok(SensorLog {
        robot_imu: read_imu(&dir.join(ROBOT_IMU_FILE), ImuFrame::RobotB)?,
        ground_imu: read_imu(&dir.join(GROUND_IMU_FILE), ImuFrame::GroundD)?,
        encoders: read_encoders(&dir.join(ENCODER_FILE))?,
    })
}

/// `component,srs,proposed` rows in table order.
pub fn write_rmse_table(path: &Path, srs: &RmseRecord, proposed: &RmseRecord) -> Result<()> {
    let header = ["component", "srs", "proposed"].map(String::from);
    write_file(
        path,
        &header,
        RmseRecord::NAMES
            .iter()
            .zip(srs.components().iter().zip(proposed.components()))
            .map(|(name, (s, p))| vec![name.to_string(), fmt(*s), fmt(p)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::rotation_about;

    fn label() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn imu_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imu.csv");
        let s = vec![
            ImuSample::new(0.0, Vec3::new(0.1, -1.0 / 3.0, 1e-300), Vec3::new(9.81, 0.0, -0.0), ImuFrame::RobotB),
            ImuSample::new(0.002, Vec3::new(f64::MAX, 1.0, 2.0), Vec3::new(3.0, 4.0, 5.0), ImuFrame::RobotB),
        ];
        write_imu(&p, &s).unwrap();
        assert_eq!(read_imu(&p, ImuFrame::RobotB).unwrap(), s);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,wx,wy,wz,ax,ay,az\n"));
    }

    #[test]
    fn encoders_and_trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("enc.csv");
        let e = vec![JointState::new(0.5, DVector::from_vec(vec![0.1, 0.2]), DVector::from_vec(vec![-0.1, 0.0]))];
        write_encoders(&p, &e).unwrap();
        assert_eq!(read_encoders(&p).unwrap(), e);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("t,q1,q2,qd1,qd2\n"));

        let p = dir.path().join("trace.csv");
        let r = TraceRecord {
            t: 1.0,
            rot: rotation_about(&Vec3::new(1.0, 1.0, 0.0).normalize(), 2.5),
            vel: Vec3::new(1.0, 2.0, 3.0),
            pos: Vec3::new(-1.0, 0.5, 0.25),
            cov_diag: Vec9::from_element(0.5),
            innovation_norm: f64::NAN,
        };
        write_trace(&p, &[r]).unwrap();
        let back = read_trace(&p).unwrap();
        assert!((back[0].rot - r.rot).amax() < 1e-15);
        assert_eq!((back[0].vel, back[0].pos, back[0].cov_diag), (r.vel, r.pos, r.cov_diag));
        assert!(back[0].innovation_norm.is_nan());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "t,wx,wy,wz,ax,ay,az\n0,0,0,0,0,0,0\n0.1,0,zero,0,0,0,0\n";
        match parse_imu(bad.as_bytes(), label(), ImuFrame::RobotB) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("wy"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let short = "t,wx,wy,wz,ax,ay,az\n0,0,0\n";
        assert!(matches!(
            parse_imu(short.as_bytes(), label(), ImuFrame::RobotB),
            Err(Error::Parse { line: 2, .. })
        ));
        let header = "t,wx,wy\n";
        assert!(matches!(
            parse_imu(header.as_bytes(), label(), ImuFrame::RobotB),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_imu("".as_bytes(), label(), ImuFrame::RobotB), Err(Error::Parse { .. })));
        assert!(parse_encoders("t,q1\n".as_bytes(), label()).is_err());
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let mut row = vec!["1".to_string(), "2".into(), "0".into(), "0".into(), "0".into()];
        row.extend(std::iter::repeat_n("0".to_string(), 16));
        let text = format!("{}\n{}\n", trace_header().join(","), row.join(","));
        assert!(matches!(parse_trace(text.as_bytes(), label()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_truth(Path::new("/nonexistent/truth.csv")), Err(Error::Io { .. })));
    }
}
