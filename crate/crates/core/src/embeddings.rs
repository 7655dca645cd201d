//! Pretrained static word-embedding tables in the standard text format:
//! one `token v1 v2 ... vd` line per word.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct WordTable {
    pub dim: usize,
    pub source: String,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordTable {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut vectors = HashMap::new();
        let mut dim = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = match parts.next() {
                Some(t) => t.to_string(),
                None => continue,
            };
            let values: Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let values = values.map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: {e}", i + 1),
                )
            })?;
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!(
                        "line {}: expected {dim} components, got {}",
                        i + 1,
                        values.len()
                    ),
                ));
            }
            vectors.insert(token, values);
        }
        Ok(WordTable {
            dim,
            source: path.display().to_string(),
            vectors,
        })
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_token_vector_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.txt");
        std::fs::write(&path, "todo 0.1 0.2 0.3\nfix -1 0 1\n").unwrap();
        let table = WordTable::load(&path).unwrap();
        assert_eq!(table.dim, 3);
        assert_eq!(table.len(), 2);
        assert_eq!(table.get("todo").unwrap(), &[0.1, 0.2, 0.3]);
        assert!(table.get("absent").is_none());
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "a 1 2\nb 1 2 3\n").unwrap();
        assert!(WordTable::load(&path).is_err());
    }
}
