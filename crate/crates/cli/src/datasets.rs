//! Dataset manifests: where to get well-known datasets and how to wire them
//! into an `fp-dataset` config. The CLI prints the manifest; downloading is
//! left to the user (curl and checksum verification are one-liners).

use serde::Serialize;

use rflnn_core::{Error, Result};

#[derive(Serialize)]
struct FileEntry {
    filename: &'static str,
    url: &'static str,
    mirror_url: &'static str,
    gzip_bytes: u64,
    md5: &'static str,
}

#[derive(Serialize)]
struct DatasetManifest {
    name: &'static str,
    description: &'static str,
    files: Vec<FileEntry>,
    notes: Vec<&'static str>,
}

const KNOWN: [&str; 1] = ["mnist"];

/// Returns the JSON manifest for a known dataset name.
pub fn fetch_manifest(name: &str) -> Result<String> {
    match name {
        "mnist" => {
            let m = mnist_manifest();
            serde_json::to_string_pretty(&m)
                .map_err(|e| Error::Numeric(format!("manifest serialization failed: {e}")))
        }
        other => Err(Error::Config(format!(
            "unknown dataset `{other}`; known datasets: {}",
            KNOWN.join(", ")
        ))),
    }
}

fn mnist_manifest() -> DatasetManifest {
    DatasetManifest {
        name: "mnist",
        description: "70k 28x28 grayscale handwritten digits in IDX format \
                      (60k train, 10k test), gzip-compressed",
        files: vec![
            FileEntry {
                filename: "train-images-idx3-ubyte.gz",
                url: "http://yann.lecun.com/exdb/mnist/train-images-idx3-ubyte.gz",
                mirror_url:
                    "https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz",
                gzip_bytes: 9_912_422,
                md5: "f68b3c2dcbeaaa9fbdd348bbdeb94873",
            },
            FileEntry {
                filename: "train-labels-idx1-ubyte.gz",
                url: "http://yann.lecun.com/exdb/mnist/train-labels-idx1-ubyte.gz",
                mirror_url:
                    "https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz",
                gzip_bytes: 28_881,
                md5: "d53e105ee54ea40749a09fcbcd1e9432",
            },
            FileEntry {
                filename: "t10k-images-idx3-ubyte.gz",
                url: "http://yann.lecun.com/exdb/mnist/t10k-images-idx3-ubyte.gz",
                mirror_url:
                    "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz",
                gzip_bytes: 1_648_877,
                md5: "9fb629c4189551a2d022fa330f9573f3",
            },
            FileEntry {
                filename: "t10k-labels-idx1-ubyte.gz",
                url: "http://yann.lecun.com/exdb/mnist/t10k-labels-idx1-ubyte.gz",
                mirror_url:
                    "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz",
                gzip_bytes: 4_542,
                md5: "ec29112dd5afa0611ce80d1b7f02629c",
            },
        ],
        notes: vec![
            "gunzip each file; the decompressed files are big-endian IDX \
             containers (image magic 2051, label magic 2049)",
            "reference the decompressed train pair from an fp-dataset config: \
             [source] kind = \"idx_pair\", images = \"train-images-idx3-ubyte\", \
             labels = \"train-labels-idx1-ubyte\"",
            "pixels load scaled to [0, 1]; labels load one-hot over 10 classes; \
             set `limit` to subsample for spectral tracing",
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_manifest_is_valid_json_with_four_files() {
        let text = fetch_manifest("mnist").unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["files"].as_array().unwrap().len(), 4);
        assert_eq!(v["name"], "mnist");
    }

    #[test]
    fn unknown_dataset_is_a_config_error() {
        let err = fetch_manifest("imagenet").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("mnist"));
    }
}
