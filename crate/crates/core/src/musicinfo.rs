//! Per-song vocal-line note tracks, the reference for melody correction.
//!
//! Track file format: CSV with header `t,chroma`, one row per 0.1 s,
//! `chroma` in `0..=11` or `U` for unvoiced.

use std::collections::BTreeMap;
use std::path::Path;

use crate::dsp::{Chroma, CHROMA_HOP_S};
use crate::error::{Error, Result};

const HOP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NoteTrack {
    song_id: String,
    symbols: Vec<Chroma>,
}

impl NoteTrack {
    pub fn new(song_id: impl Into<String>, symbols: Vec<Chroma>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::param("note track needs at least one symbol"));
        }
        Ok(NoteTrack {
            song_id: song_id.into(),
            symbols,
        })
    }

    pub fn song_id(&self) -> &str {
        &self.song_id
    }

    pub fn symbols(&self) -> &[Chroma] {
        &self.symbols
    }

    pub fn duration(&self) -> f64 {
        self.symbols.len() as f64 * CHROMA_HOP_S
    }

    /// Parses the CSV text of a track. `origin` names the source in errors.
    pub fn parse(song_id: impl Into<String>, text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "t,chroma" => {}
            Some((_, header)) => {
                return Err(Error::parse(
                    origin,
                    1,
                    format!("expected header `t,chroma`, found {header:?}"),
                ))
            }
            None => return Err(Error::parse(origin, 1, "empty note-track file")),
        }
        let mut symbols = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (t, c) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(origin, lineno, "expected two fields"))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad time {t:?}")))?;
            let expected = symbols.len() as f64 * CHROMA_HOP_S;
            if (t - expected).abs() > HOP_TOLERANCE {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("time {t} breaks the 0.1 s hop (expected {expected:.1})"),
                ));
            }
            let c = c.trim();
            let symbol = if c == "U" {
                Chroma::UNVOICED
            } else {
                let v: u8 = c
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad chroma {c:?}")))?;
                Chroma::voiced(v)
                    .map_err(|_| Error::parse(origin, lineno, format!("chroma {v} out of 0..=11")))?
            };
            symbols.push(symbol);
        }
        if symbols.is_empty() {
            return Err(Error::parse(origin, 1, "note track has no rows"));
        }
        NoteTrack::new(song_id, symbols)
    }

    /// Canonical serialization; parsing it back yields the same bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.symbols.len() * 8 + 9);
        out.push_str("t,chroma\n");
        for (i, s) in self.symbols.iter().enumerate() {
            out.push_str(&format!("{:.1},{}\n", i as f64 / 10.0, s));
        }
        out
    }

    /// Symbols covering `[max(0, t0 - margin), min(end, t1 + margin))`.
    pub fn window(&self, t0: f64, t1: f64, margin: f64) -> Result<&[Chroma]> {
        note_window(self, t0, t1, margin)
    }
}

pub fn load_note_track(path: &Path) -> Result<NoteTrack> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let song_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    NoteTrack::parse(song_id, &text, path)
}

pub fn note_window(track: &NoteTrack, t0: f64, t1: f64, margin: f64) -> Result<&[Chroma]> {
    if !(t0 < t1) || margin < 0.0 {
        return Err(Error::param(format!(
            "note window needs t0 < t1 and margin >= 0 (t0={t0}, t1={t1}, margin={margin})"
        )));
    }
    let len = track.symbols.len() as i64;
    let lo = ((t0 - margin).max(0.0) / CHROMA_HOP_S + 1e-9).floor() as i64;
    let hi = (((t1 + margin) / CHROMA_HOP_S) - 1e-9).ceil() as i64;
    let hi = hi.min(len);
    if lo >= hi {
        return Err(Error::EmptyWindow { t0, t1 });
    }
    Ok(&track.symbols[lo as usize..hi as usize])
}

/// Note tracks by song id. Read-only once built.
#[derive(Debug, Clone, Default)]
pub struct MusicInfoStore {
    tracks: BTreeMap<String, NoteTrack>,
}

impl MusicInfoStore {
    pub fn new(tracks: impl IntoIterator<Item = NoteTrack>) -> Self {
        MusicInfoStore {
            tracks: tracks
                .into_iter()
                .map(|t| (t.song_id.clone(), t))
                .collect(),
        }
    }

    /// Loads every `<song_id>.csv` in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let tracks = paths
            .iter()
            .map(|p| load_note_track(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(MusicInfoStore::new(tracks))
    }

    pub fn get(&self, song_id: &str) -> Option<&NoteTrack> {
        self.tracks.get(song_id)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}
