use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{read_file, read_pnm, write_file, write_pnm};
use crate::dataset::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};

/// Parses `relative_path<TAB>label_name` lines; blank lines and lines starting
/// with `#` are skipped.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim_end_matches('\r');
        if !(trimmed.trim().is_empty() || trimmed.starts_with('#')) {
            let (file, label) = trimmed.split_once('\t').ok_or_else(|| {
                Error::format(path, offset, format!("expected path<TAB>label, got {trimmed:?}"))
            })?;
            if file.is_empty() || label.is_empty() {
                return Err(Error::format(path, offset, "empty path or label"));
            }
            entries.push((file.to_string(), label.to_string()));
        }
        offset += line.len() as u64 + 1;
    }
    Ok(entries)
}

/// Loads a directory of binary PGMs described by a manifest. Class indices
/// follow the lexicographic order of the label names.
pub fn load_pgm_dir(root: &Path, manifest: &Path) -> Result<Dataset> {
    let text = String::from_utf8(read_file(manifest)?)
        .map_err(|e| Error::format(manifest, e.utf8_error().valid_up_to() as u64, "manifest is not UTF-8"))?;
    let entries = parse_manifest(&text, manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "manifest {} lists no images",
            manifest.display()
        )));
    }
    let names: Vec<String> = entries
        .iter()
        .map(|(_, l)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut items = Vec::with_capacity(entries.len());
    let mut dims = None;
    for (file, label) in &entries {
        let path = root.join(file);
        let image = read_pnm(&path)?;
        if image.channels() != 1 {
            return Err(Error::format(&path, 0, "expected a grayscale P5 image"));
        }
        let d = (image.width(), image.height());
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(Error::format(
                    &path,
                    0,
                    format!("image is {}×{}, earlier images are {}×{}", d.0, d.1, first.0, first.1),
                ))
            }
            _ => {}
        }
        let label = names.binary_search(label).expect("label collected above");
        items.push(LabeledImage { image, label });
    }
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "faces".into());
    Ok(Dataset::new(name, names.len(), items, Split::Unsplit)?.with_class_names(names))
}

/// Writes every item as `<label>/<index>.pgm` plus a manifest. Label names
/// come from the dataset's class names or are zero-padded indices.
pub fn write_pgm_dir(dataset: &Dataset, root: &Path, manifest: &Path) -> Result<()> {
    let label_name = |l: usize| {
        dataset
            .class_names()
            .get(l)
            .cloned()
            .unwrap_or_else(|| format!("class{l:04}"))
    };
    let mut text = String::new();
    for (i, item) in dataset.items().iter().enumerate() {
        let name = label_name(item.label);
        let rel: PathBuf = [name.as_str(), &format!("{i:06}.pgm")].iter().collect();
        write_pnm(&item.image, &root.join(&rel))?;
        text.push_str(&format!("{}\t{name}\n", rel.display()));
    }
    write_file(manifest, text.as_bytes())
}
