use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Capture time, s.
    pub timestamp: f64,
}

impl ImageFrame {
    pub fn filled(width: usize, height: usize, level: u8, timestamp: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![level; width * height],
            timestamp,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary PGM (P5, maxval 255). The timestamp travels in a comment.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n# timestamp {}\n{} {}\n255\n", self.timestamp, self.width, self.height)?;
        w.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self> {
        let mut tokens: Vec<String> = Vec::new();
        let mut timestamp = 0.0;
        let mut line = String::new();
        while tokens.len() < 4 {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("truncated PGM header".into()));
            }
            let (content, comment) = match line.find('#') {
                Some(i) => (&line[..i], Some(&line[i + 1..])),
                None => (line.as_str(), None),
            };
            if let Some(ts) = comment.and_then(|c| c.trim().strip_prefix("timestamp ")) {
                timestamp = ts
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad timestamp comment `{}`", ts.trim())))?;
            }
            tokens.extend(content.split_whitespace().map(String::from));
        }
        if tokens[0] != "P5" {
            return Err(Error::Format(format!("expected P5 PGM, found `{}`", tokens[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PGM header field `{s}`")))
        };
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("only 8-bit PGM is supported (maxval {maxval})")));
        }
        if tokens.len() > 4 {
            return Err(Error::Format("unexpected data in PGM header".into()));
        }
        let mut pixels = vec![0u8; width * height];
        r.read_exact(&mut pixels)
            .map_err(|_| Error::Format("PGM pixel data is truncated".into()))?;
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
        })
    }
}
