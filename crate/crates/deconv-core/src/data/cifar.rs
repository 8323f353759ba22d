//! Bit-exact CIFAR-10/100 binary ingestion.
//!
//! CIFAR-10 records are 3073 bytes: one label byte (0–9) followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue, each row-major). CIFAR-100
//! records carry two label bytes (coarse, fine) before the same 3072 pixels;
//! only the fine label is used. Official files hold exactly 10000 records.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Dataset, Split};

pub const CIFAR10_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR10_TEST_FILE: &str = "test_batch.bin";
pub const CIFAR100_TRAIN_FILE: &str = "train.bin";
pub const CIFAR100_TEST_FILE: &str = "test.bin";

const IMAGE_BYTES: usize = 3072;
const CIFAR10_RECORD: usize = 1 + IMAGE_BYTES;
const CIFAR100_RECORD: usize = 2 + IMAGE_BYTES;
const RECORDS_PER_FILE: usize = 10000;

/// Split a CIFAR-10 byte buffer into (label, pixels) records. The buffer
/// must be a whole number of 3073-byte records with labels in 0–9.
pub fn parse_cifar10_records<'a>(bytes: &'a [u8], path: &str) -> Result<Vec<(u8, &'a [u8])>> {
    if bytes.len() % CIFAR10_RECORD != 0 {
        return Err(Error::FileSize {
            path: path.into(),
            expected: (bytes.len() / CIFAR10_RECORD * CIFAR10_RECORD) as u64,
            actual: bytes.len() as u64,
        });
    }
    bytes
        .chunks_exact(CIFAR10_RECORD)
        .enumerate()
        .map(|(index, rec)| {
            let label = rec[0];
            if label > 9 {
                return Err(Error::CorruptRecord {
                    path: path.into(),
                    index,
                    detail: format!("label byte {label} > 9"),
                });
            }
            Ok((label, &rec[1..]))
        })
        .collect()
}

/// Split a CIFAR-100 byte buffer into (coarse, fine, pixels) records.
pub fn parse_cifar100_records<'a>(bytes: &'a [u8], path: &str) -> Result<Vec<(u8, u8, &'a [u8])>> {
    if bytes.len() % CIFAR100_RECORD != 0 {
        return Err(Error::FileSize {
            path: path.into(),
            expected: (bytes.len() / CIFAR100_RECORD * CIFAR100_RECORD) as u64,
            actual: bytes.len() as u64,
        });
    }
    bytes
        .chunks_exact(CIFAR100_RECORD)
        .enumerate()
        .map(|(index, rec)| {
            let (coarse, fine) = (rec[0], rec[1]);
            if fine > 99 {
                return Err(Error::CorruptRecord {
                    path: path.into(),
                    index,
                    detail: format!("fine label byte {fine} > 99"),
                });
            }
            Ok((coarse, fine, &rec[2..]))
        })
        .collect()
}

fn read_exact_file(path: &Path, expected: u64) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.display().to_string() });
    }
    let actual = fs::metadata(path)?.len();
    if actual != expected {
        return Err(Error::FileSize {
            path: path.display().to_string(),
            expected,
            actual,
        });
    }
    Ok(fs::read(path)?)
}

fn push_pixels<T: Scalar>(images: &mut Vec<T>, pixels: &[u8]) {
    let inv = T::from_f64(1.0 / 255.0);
    images.extend(pixels.iter().map(|&b| T::from_usize(b as usize) * inv));
}

/// Load the official CIFAR-10 binary files (50000 train / 10000 test images
/// scaled to [0, 1]).
pub fn load_cifar10<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let mut train_images = Vec::with_capacity(50000 * IMAGE_BYTES);
    let mut train_labels = Vec::with_capacity(50000);
    for name in CIFAR10_TRAIN_FILES {
        let path = dir.join(name);
        let bytes = read_exact_file(&path, (RECORDS_PER_FILE * CIFAR10_RECORD) as u64)?;
        for (label, pixels) in parse_cifar10_records(&bytes, &path.display().to_string())? {
            train_labels.push(u32::from(label));
            push_pixels(&mut train_images, pixels);
        }
    }
    let test_path = dir.join(CIFAR10_TEST_FILE);
    let bytes = read_exact_file(&test_path, (RECORDS_PER_FILE * CIFAR10_RECORD) as u64)?;
    let mut test_images = Vec::with_capacity(10000 * IMAGE_BYTES);
    let mut test_labels = Vec::with_capacity(10000);
    for (label, pixels) in parse_cifar10_records(&bytes, &test_path.display().to_string())? {
        test_labels.push(u32::from(label));
        push_pixels(&mut test_images, pixels);
    }
    Ok((
        Dataset::from_parts(train_images, train_labels, 10, Split::Train)?,
        Dataset::from_parts(test_images, test_labels, 10, Split::Test)?,
    ))
}

/// Load the official CIFAR-100 binary files; the fine label is the class.
pub fn load_cifar100<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let train_path = dir.join(CIFAR100_TRAIN_FILE);
    let bytes = read_exact_file(&train_path, (5 * RECORDS_PER_FILE * CIFAR100_RECORD) as u64)?;
    let mut train_images = Vec::with_capacity(50000 * IMAGE_BYTES);
    let mut train_labels = Vec::with_capacity(50000);
    for (_, fine, pixels) in parse_cifar100_records(&bytes, &train_path.display().to_string())? {
        train_labels.push(u32::from(fine));
        push_pixels(&mut train_images, pixels);
    }
    let test_path = dir.join(CIFAR100_TEST_FILE);
    let bytes = read_exact_file(&test_path, (RECORDS_PER_FILE * CIFAR100_RECORD) as u64)?;
    let mut test_images = Vec::with_capacity(10000 * IMAGE_BYTES);
    let mut test_labels = Vec::with_capacity(10000);
    for (_, fine, pixels) in parse_cifar100_records(&bytes, &test_path.display().to_string())? {
        test_labels.push(u32::from(fine));
        push_pixels(&mut test_images, pixels);
    }
    Ok((
        Dataset::from_parts(train_images, train_labels, 100, Split::Train)?,
        Dataset::from_parts(test_images, test_labels, 100, Split::Test)?,
    ))
}

/// What `verify-data` reports for one dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub files_checked: Vec<String>,
    pub records: usize,
}

fn verify_file(path: &Path, record_bytes: usize, check: impl Fn(&[u8], usize) -> Result<()>) -> Result<usize> {
    let bytes = read_exact_file(path, (RECORDS_PER_FILE * record_bytes) as u64)?;
    for (index, rec) in bytes.chunks_exact(record_bytes).enumerate() {
        check(rec, index).map_err(|e| match e {
            Error::CorruptRecord { detail, .. } => Error::CorruptRecord {
                path: path.display().to_string(),
                index,
                detail,
            },
            other => other,
        })?;
    }
    Ok(RECORDS_PER_FILE)
}

/// Verify file presence, exact sizes, and label ranges without building
/// datasets. Never fetches anything.
pub fn verify_cifar10(dir: &Path) -> Result<VerifyReport> {
    let mut report = VerifyReport { files_checked: Vec::new(), records: 0 };
    for name in CIFAR10_TRAIN_FILES.iter().chain([CIFAR10_TEST_FILE].iter()) {
        let path = dir.join(name);
        report.records += verify_file(&path, CIFAR10_RECORD, |rec, index| {
            if rec[0] > 9 {
                return Err(Error::CorruptRecord {
                    path: String::new(),
                    index,
                    detail: format!("label byte {} > 9", rec[0]),
                });
            }
            Ok(())
        })?;
        report.files_checked.push(name.to_string());
    }
    Ok(report)
}

pub fn verify_cifar100(dir: &Path) -> Result<VerifyReport> {
    let mut report = VerifyReport { files_checked: Vec::new(), records: 0 };
    let train = dir.join(CIFAR100_TRAIN_FILE);
    let train_bytes = read_exact_file(&train, (5 * RECORDS_PER_FILE * CIFAR100_RECORD) as u64)?;
    for (index, rec) in train_bytes.chunks_exact(CIFAR100_RECORD).enumerate() {
        if rec[1] > 99 {
            return Err(Error::CorruptRecord {
                path: train.display().to_string(),
                index,
                detail: format!("fine label byte {} > 99", rec[1]),
            });
        }
    }
    report.records += 5 * RECORDS_PER_FILE;
    report.files_checked.push(CIFAR100_TRAIN_FILE.to_string());

    let test = dir.join(CIFAR100_TEST_FILE);
    report.records += verify_file(&test, CIFAR100_RECORD, |rec, index| {
        if rec[1] > 99 {
            return Err(Error::CorruptRecord {
                path: String::new(),
                index,
                detail: format!("fine label byte {} > 99", rec[1]),
            });
        }
        Ok(())
    })?;
    report.files_checked.push(CIFAR100_TEST_FILE.to_string());
    Ok(report)
}


#[cfg(test)]
mod full_file_tests {
    use super::*;

    /// Write six official-size CIFAR-10 files with patterned bytes: label of
    /// record r is r mod 10, pixel byte i is (r + i) mod 256.
    fn write_patterned_dir(dir: &std::path::Path) {
        for name in CIFAR10_TRAIN_FILES.iter().chain([CIFAR10_TEST_FILE].iter()) {
            let mut bytes = Vec::with_capacity(RECORDS_PER_FILE * CIFAR10_RECORD);
            for r in 0..RECORDS_PER_FILE {
                bytes.push((r % 10) as u8);
                for i in 0..IMAGE_BYTES {
                    bytes.push(((r + i) % 256) as u8);
                }
            }
            std::fs::write(dir.join(name), &bytes).unwrap();
        }
    }

    #[test]
    fn loading_the_same_files_twice_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        write_patterned_dir(dir.path());
        let (train_a, test_a) = load_cifar10::<f32>(dir.path()).unwrap();
        let (train_b, test_b) = load_cifar10::<f32>(dir.path()).unwrap();
        assert_eq!(train_a.images, train_b.images);
        assert_eq!(test_a.images, test_b.images);
        assert_eq!(train_a.labels, train_b.labels);

        assert_eq!(train_a.len(), 50000);
        assert_eq!(test_a.len(), 10000);
        assert_eq!(train_a.histogram(), vec![5000; 10]);
        // Spot-check scaling: record 0 pixel 0 of batch 1 is byte 0 → 0/255.
        assert_eq!(train_a.image(0)[0], 0.0);
        assert_eq!(train_a.image(0)[1], 1.0 / 255.0);

        let report = verify_cifar10(dir.path()).unwrap();
        assert_eq!(report.records, 60000);
    }
}
