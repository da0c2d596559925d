//! CSV ingestion and export.
//!
//! Device CSV columns, in order:
//! `id,owner_id,device_type,latitude,longitude,mobility,mode,brand,
//!  cpu_manufacturer,cores,cpi,clock_rate_ghz,ram_gb,availability_pct`.
//! Meetings CSV columns: `device_a,device_b,start_time_s,duration_min`.
//! UTF-8, header row required.

use std::collections::BTreeSet;
use std::path::Path;

use super::{DatasetError, Device, MeetingEvent};

pub fn load_devices(path: impl AsRef<Path>) -> Result<Vec<Device>, DatasetError> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut devices = Vec::new();
    let mut seen = BTreeSet::new();
    for result in reader.deserialize::<Device>() {
        let device = result.map_err(|e| match e.position() {
            Some(pos) => DatasetError::MalformedRow { line: pos.line(), reason: e.to_string() },
            None => DatasetError::Csv(e),
        })?;
        device.validate()?;
        if !seen.insert(device.id) {
            return Err(DatasetError::DuplicateId(device.id));
        }
        devices.push(device);
    }
    Ok(devices)
}

pub fn save_devices(path: impl AsRef<Path>, devices: &[Device]) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for device in devices {
        writer.serialize(device)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_meetings(path: impl AsRef<Path>) -> Result<Vec<MeetingEvent>, DatasetError> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut meetings = Vec::new();
    for result in reader.deserialize::<MeetingEvent>() {
        let meeting = result.map_err(|e| match e.position() {
            Some(pos) => DatasetError::MalformedRow { line: pos.line(), reason: e.to_string() },
            None => DatasetError::Csv(e),
        })?;
        if meeting.device_a == meeting.device_b {
            return Err(DatasetError::InvalidParams(format!(
                "meeting pairs device {} with itself",
                meeting.device_a
            )));
        }
        if !(meeting.duration_min > 0.0) {
            return Err(DatasetError::OutOfRange {
                field: "duration_min",
                value: meeting.duration_min,
            });
        }
        meetings.push(meeting);
    }
    Ok(meetings)
}

pub fn save_meetings(path: impl AsRef<Path>, meetings: &[MeetingEvent]) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for meeting in meetings {
        writer.serialize(meeting)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_devices, GeoBox};

    const HEADER: &str = "id,owner_id,device_type,latitude,longitude,mobility,mode,brand,\
cpu_manufacturer,cores,cpi,clock_rate_ghz,ram_gb,availability_pct";

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), content).unwrap();
        file
    }

    #[test]
    fn device_round_trip() {
        let devices = generate_synthetic_devices(50, 20, GeoBox::default(), 4).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        save_devices(file.path(), &devices).unwrap();
        assert_eq!(load_devices(file.path()).unwrap(), devices);
    }

    #[test]
    fn header_only_file_is_empty() {
        let file = write_tmp(&format!("{HEADER}\n"));
        assert!(load_devices(file.path()).unwrap().is_empty());
    }

    #[test]
    fn availability_out_of_range_rejected() {
        let file = write_tmp(&format!(
            "{HEADER}\n0,0,pc,43.0,-3.8,static,public,acme,acme,4,8,2.4,8,120\n"
        ));
        match load_devices(file.path()) {
            Err(DatasetError::OutOfRange { field, .. }) => assert_eq!(field, "availability_pct"),
            other => panic!("expected OutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let row = "0,0,pc,43.0,-3.8,static,public,acme,acme,4,8,2.4,8,50";
        let file = write_tmp(&format!("{HEADER}\n{row}\n{row}\n"));
        assert!(matches!(load_devices(file.path()), Err(DatasetError::DuplicateId(0))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let file = write_tmp(&format!(
            "{HEADER}\n0,0,pc,43.0,-3.8,static,public,acme,acme,4,8,2.4,8,50\n1,1,pc,not-a-number,-3.8,static,public,acme,acme,4,8,2.4,8,50\n"
        ));
        match load_devices(file.path()) {
            Err(DatasetError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn meeting_round_trip_and_validation() {
        let meetings = vec![
            MeetingEvent { device_a: 1, device_b: 2, start_time_s: 0.0, duration_min: 45.0 },
            MeetingEvent { device_a: 1, device_b: 3, start_time_s: 3600.0, duration_min: 60.0 },
        ];
        let file = tempfile::NamedTempFile::new().unwrap();
        save_meetings(file.path(), &meetings).unwrap();
        assert_eq!(load_meetings(file.path()).unwrap(), meetings);

        let bad = write_tmp("device_a,device_b,start_time_s,duration_min\n1,1,0,30\n");
        assert!(load_meetings(bad.path()).is_err());
        let bad = write_tmp("device_a,device_b,start_time_s,duration_min\n1,2,0,0\n");
        assert!(load_meetings(bad.path()).is_err());
    }
}
