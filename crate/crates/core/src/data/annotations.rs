use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::{resolve, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, EulerPose, Image};

pub const REQUIRED_COLUMNS: [&str; 8] = ["image", "x1", "y1", "x2", "y2", "yaw", "pitch", "roll"];
const POSE_LIMIT: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    Csv,
    Jsonl,
}

impl AnnotationFormat {
    /// Guesses from the extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Self::Jsonl,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line in the source file.
    pub line: usize,
    pub message: String,
}

/// Parsed annotation file: accepted records in file order plus every rejected row.
#[derive(Debug, Clone, Default)]
pub struct Annotations {
    pub records: Vec<SampleRecord>,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

impl Annotations {
    /// Records, or the first rejected row as an error.
    pub fn into_strict(self, path: &Path) -> Result<Vec<SampleRecord>> {
        match self.rejected.into_iter().next() {
            Some(r) => Err(Error::Annotation {
                path: path.to_path_buf(),
                line: r.line,
                message: r.message,
            }),
            None => Ok(self.records),
        }
    }
}

/// Reads a CSV or JSON-lines annotation file.
///
/// Required fields: `image, x1, y1, x2, y2, yaw, pitch, roll`; optional
/// `split` (`train`/`test`, default train) and `source` (default: file stem).
/// Relative image paths resolve against the file's directory. Box coordinates
/// are rounded to whole pixels.
pub fn load_annotations(path: &Path, format: AnnotationFormat) -> Result<Annotations> {
    let base = path.parent().unwrap_or(Path::new(""));
    let default_source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    let rows = match format {
        AnnotationFormat::Csv => read_csv(path)?,
        AnnotationFormat::Jsonl => read_jsonl(path)?,
    };
    let mut out = Annotations::default();
    for (line, fields) in rows {
        match parse_row(&fields, base, &default_source) {
            Ok(r) => out.records.push(r),
            Err(message) => {
                log::warn!("{}:{line}: {message}", path.display());
                out.rejected.push(RejectedRow { line, message });
            }
        }
    }
    if out.records.is_empty() && out.rejected.is_empty() {
        let w = format!("{}: no annotation rows", path.display());
        log::warn!("{w}");
        out.warnings.push(w);
    }
    Ok(out)
}

type Row = (usize, HashMap<String, String>);

fn missing(path: &Path, column: &str) -> Error {
    Error::MissingColumn {
        path: path.to_path_buf(),
        column: column.to_string(),
    }
}

fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let bad = |e: csv::Error| Error::Annotation {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        message: e.to_string(),
    };
    let headers: Vec<String> = reader.headers().map_err(bad)?.iter().map(str::to_string).collect();
    if let Some(c) = REQUIRED_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == *c)) {
        return Err(missing(path, c));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(bad)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, headers.iter().cloned().zip(rec.iter().map(str::to_string)).collect()));
    }
    Ok(rows)
}

fn read_jsonl(path: &Path) -> Result<Vec<Row>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let annotation_err = |message: String| Error::Annotation {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let obj = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(annotation_err("expected a JSON object".into())),
            Err(e) => return Err(annotation_err(e.to_string())),
        };
        if let Some(c) = REQUIRED_COLUMNS.iter().find(|c| !obj.contains_key(**c)) {
            return Err(missing(path, c));
        }
        let fields = obj
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s,
                    Value::Null => "NaN".to_string(),
                    other => other.to_string(),
                };
                (k, s)
            })
            .collect();
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn number(fields: &HashMap<String, String>, key: &str) -> std::result::Result<f64, String> {
    let raw = &fields[key];
    raw.trim().parse::<f64>().map_err(|_| format!("{key} `{raw}` is not a number"))
}

fn parse_row(fields: &HashMap<String, String>, base: &Path, default_source: &str) -> std::result::Result<SampleRecord, String> {
    let image = fields["image"].trim().to_string();
    if image.is_empty() {
        return Err("empty image path".into());
    }
    let mut coords = [0i64; 4];
    for (c, key) in coords.iter_mut().zip(["x1", "y1", "x2", "y2"]) {
        let v = number(fields, key)?;
        if !v.is_finite() {
            return Err(format!("{key} is not finite"));
        }
        *c = v.round() as i64;
    }
    let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| e.to_string())?;
    let mut angles = [0.0; 3];
    for (a, key) in angles.iter_mut().zip(["yaw", "pitch", "roll"]) {
        let v = number(fields, key)?;
        if !v.is_finite() {
            return Err(format!("{key} is not finite"));
        }
        if v.abs() > POSE_LIMIT {
            return Err(format!("{key} {v} lies outside [-180, 180]"));
        }
        *a = v;
    }
    let split = match fields.get("split") {
        Some(s) => s.parse::<Split>()?,
        None => Split::Train,
    };
    let source = fields.get("source").filter(|s| !s.trim().is_empty()).cloned().unwrap_or_else(|| default_source.to_string());
    Ok(SampleRecord {
        image_path: resolve(base, &image),
        id: image,
        bbox,
        pose: EulerPose::from_array(angles),
        split,
        source,
    })
}

/// Tries to decode every referenced image; returns `(record index, error)` for failures.
pub fn validate_images(records: &[SampleRecord]) -> Vec<(usize, Error)> {
    records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Image::open(&r.image_path).err().map(|e| (i, e)))
        .collect()
}

/// Writes records as annotation CSV with image paths relative to `path`'s directory when possible.
pub fn write_annotations(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(REQUIRED_COLUMNS.iter().copied().chain(["split", "source"])).map_err(io)?;
    for r in records {
        let image = r.image_path.strip_prefix(base).unwrap_or(&r.image_path).to_string_lossy().into_owned();
        let split = match r.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        w.write_record([
            image,
            r.bbox.x1.to_string(),
            r.bbox.y1.to_string(),
            r.bbox.x2.to_string(),
            r.bbox.y2.to_string(),
            r.pose.yaw.to_string(),
            r.pose.pitch.to_string(),
            r.pose.roll.to_string(),
            split.to_string(),
            r.source.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    const HEADER: &str = "image,x1,y1,x2,y2,yaw,pitch,roll\n";

    #[test]
    fn well_formed_csv_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            &format!("{HEADER}a.png,0,0,10,10,1,2,3\nb.png,1,1,11,12,-4,5,-6\nsub/c.png,2,2,20,20,7,8,9\n"),
        );
        let a = load_annotations(&p, AnnotationFormat::Csv).unwrap();
        assert!(a.rejected.is_empty());
        let ids: Vec<_> = a.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a.png", "b.png", "sub/c.png"]);
        assert_eq!(a.records[1].pose, EulerPose::new(-4.0, 5.0, -6.0));
        assert_eq!(a.records[2].image_path, dir.path().join("sub/c.png"));
        assert_eq!(a.records[0].source, "a");
    }

    #[test]
    fn nan_row_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", &format!("{HEADER}a.png,0,0,10,10,1,2,3\nb.png,0,0,10,10,NaN,2,3\n"));
        let a = load_annotations(&p, AnnotationFormat::Csv).unwrap();
        assert_eq!(a.records.len(), 1);
        assert_eq!(a.rejected.len(), 1);
        assert_eq!(a.rejected[0].line, 3);
        assert!(a.rejected[0].message.contains("yaw"));
        match a.into_strict(&p) {
            Err(Error::Annotation { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_and_degenerate_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", &format!("{HEADER}a.png,0,0,10,10,181,2,3\nb.png,5,0,5,10,1,2,3\n"));
        let a = load_annotations(&p, AnnotationFormat::Csv).unwrap();
        assert!(a.records.is_empty());
        assert_eq!(a.rejected.iter().map(|r| r.line).collect::<Vec<_>>(), [2, 3]);
    }

    #[test]
    fn empty_file_warns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "");
        let a = load_annotations(&p, AnnotationFormat::Csv).unwrap();
        assert!(a.records.is_empty());
        assert_eq!(a.warnings.len(), 1);
        let p = write(dir.path(), "b.csv", HEADER);
        assert_eq!(load_annotations(&p, AnnotationFormat::Csv).unwrap().warnings.len(), 1);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "image,x1,y1,x2,y2,yaw,roll\na.png,0,0,1,1,0,0\n");
        match load_annotations(&p, AnnotationFormat::Csv) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "pitch"),
            other => panic!("{other:?}"),
        }
        let p = write(dir.path(), "a.jsonl", "{\"image\":\"a.png\",\"x1\":0,\"y1\":0,\"x2\":1,\"y2\":1,\"pitch\":0,\"roll\":0}\n");
        match load_annotations(&p, AnnotationFormat::Jsonl) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "yaw"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jsonl_rows_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            "{\"image\":\"a.png\",\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10,\"yaw\":1.5,\"pitch\":-2,\"roll\":3,\"split\":\"test\",\"source\":\"biwi\"}\n\n{\"image\":\"b.png\",\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10,\"yaw\":\"NaN\",\"pitch\":0,\"roll\":0}\n",
        );
        let a = load_annotations(&p, AnnotationFormat::from_path(&p)).unwrap();
        assert_eq!(a.records.len(), 1);
        assert_eq!(a.records[0].split, Split::Test);
        assert_eq!(a.records[0].source, "biwi");
        assert_eq!(a.rejected[0].line, 3);
    }

    #[test]
    fn write_then_load_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", &format!("{HEADER}a.png,0,0,10,10,1.25,2,3\n"));
        let a = load_annotations(&p, AnnotationFormat::Csv).unwrap().records;
        let q = dir.path().join("b.csv");
        write_annotations(&q, &a).unwrap();
        let b = load_annotations(&q, AnnotationFormat::Csv).unwrap().records;
        assert_eq!(a[0].pose, b[0].pose);
        assert_eq!(a[0].image_path, b[0].image_path);
    }

    #[test]
    fn unreadable_images_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        Image::filled(4, 4, [1.0; 3]).save(&dir.path().join("ok.png")).unwrap();
        let p = write(dir.path(), "a.csv", &format!("{HEADER}ok.png,0,0,4,4,0,0,0\nmissing.png,0,0,4,4,0,0,0\n"));
        let a = load_annotations(&p, AnnotationFormat::Csv).unwrap();
        let bad = validate_images(&a.records);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].0, 1);
    }
}
