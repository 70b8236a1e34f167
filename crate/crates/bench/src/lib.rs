//! Shared inputs for the criterion benches.

use capscore::{Caption, ReferenceSet};

const WORDS: &[&str] = &[
    "a", "man", "woman", "dog", "cat", "riding", "sitting", "on", "the", "of", "red", "blue", "street", "table",
    "with", "next", "to", "large", "small", "white", "black", "horse", "bike", "field", "playing", "ball",
];

/// Deterministic pseudo-captions: `images` reference sets of `refs` captions each.
pub fn synthetic_refsets(images: u64, refs: usize, len: usize) -> Vec<ReferenceSet> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..images)
        .map(|image_id| ReferenceSet {
            image_id,
            refs: (0..refs)
                .map(|r| {
                    let text: Vec<&str> = (0..len).map(|_| WORDS[next() as usize % WORDS.len()]).collect();
                    Caption::new(format!("{image_id}-{r}"), image_id, text.join(" ")).expect("non-empty")
                })
                .collect(),
        })
        .collect()
}
