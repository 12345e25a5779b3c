//! QWERTY key adjacency used by the butterfinger typo.
//!
//! The table is the shipped data file `data/qwerty-adjacency-v1.txt`; one
//! `<letter> <neighbors>` entry per line, `#` starts a comment.

/// Raw contents of the adjacency data file.
pub const QWERTY_V1: &str = include_str!("../data/qwerty-adjacency-v1.txt");

/// Lower-case neighbors of an ASCII letter, or `None` for any other character.
pub fn neighbors(c: char) -> Option<&'static str> {
    if !c.is_ascii_alphabetic() {
        return None;
    }
    let key = c.to_ascii_lowercase();
    QWERTY_V1.lines().filter(|l| !l.starts_with('#')).find_map(|line| {
        let (letter, rest) = line.split_once(' ')?;
        (letter.len() == 1 && letter.starts_with(key)).then(|| rest.trim())
    })
}
