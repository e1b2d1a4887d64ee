//! CSV tables. Floats use `{:.16e}` so values round-trip exactly; nothing
//! time-dependent is written, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub struct Table {
    columns: usize,
    text: String,
}

pub enum Cell<'a> {
    F(f64),
    I(u64),
    B(bool),
    S(&'a str),
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            columns: header.len(),
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => write!(self.text, "{x:.16e}").unwrap(),
                Cell::I(n) => write!(self.text, "{n}").unwrap(),
                Cell::B(b) => self.text.push(if *b { '1' } else { '0' }),
                Cell::S(s) => self.text.push_str(&quote(s)),
            }
        }
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// η as it appears in file names.
pub fn eta_tag(eta: f64) -> String {
    format!("{eta}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_and_quotes() {
        let mut t = Table::new(&["a", "b", "c", "d"]);
        t.row(&[Cell::F(0.1), Cell::I(3), Cell::B(true), Cell::S("x, y")]);
        t.row(&[Cell::F(f64::NAN), Cell::I(0), Cell::B(false), Cell::S("z")]);
        assert_eq!(t.text, "a,b,c,d\n1.0000000000000001e-1,3,1,\"x, y\"\nNaN,0,0,z\n");
        let parsed: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(parsed, 0.1);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Table::new(&["x"]);
        t.row(&[Cell::I(1)]);
        t.write(&p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "x\n1\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
