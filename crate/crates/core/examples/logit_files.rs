//! Writing, reading and validating LGTS logit files with manifests and a
//! shared labels file.
//!
//! cargo run --example logit_files

use kdlab::logit_io::{self, Dtype, Manifest, Split, HEADER_LEN};
use kdlab::Matrix;

fn main() -> kdlab::Result<()> {
    let dir = std::env::temp_dir().join("kdlab-logit-example");
    let logits = Matrix::from_rows(&[vec![2.5, -1.0, 0.25], vec![0.5, 3.0, -2.0]])?;
    logit_io::write_labels(&dir.join("test.labels"), &[0, 1])?;

    let path = dir.join("toy.test.lgts");
    let manifest = logit_io::write_logits(&path, &logits, &Manifest::new("toy", "demo", Split::Test, "test.labels"), Dtype::F64)?;
    println!("wrote {} ({} header + {} payload bytes), checksum {}", path.display(), HEADER_LEN, 6 * 8, manifest.checksum);
    println!("manifest {}", std::fs::read_to_string(logit_io::manifest_path(&path)).unwrap_or_default());

    let (back, _, labels) = logit_io::read_logits_with_labels(&path)?;
    println!("read back identical: {}, labels {labels:?}", back == logits);
    println!("validation: {:?}", logit_io::validate(&path));

    logit_io::write_labels(&dir.join("test.labels"), &[0, 7])?;
    println!("after a bad label: {:?}", logit_io::validate(&path).findings);

    let mut bytes = logit_io::encode(&logits, Dtype::F32)?;
    bytes[0] = b'X';
    println!("bad magic: {}", logit_io::decode(&bytes).unwrap_err());
    Ok(())
}
