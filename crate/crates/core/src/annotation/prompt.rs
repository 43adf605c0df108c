use xxhash_rust::xxh3::xxh3_64;

use crate::catalog::Item;
use crate::labels::Fbl9;

/// Fixed system message sent with every completion request.
pub const SYSTEM_MESSAGE: &str =
    "You are an expert merchandiser. You classify the functional relationship between two retail items and reply with a single category code.";

/// Category definitions in code order. The wording mirrors the established
/// nine-way functional taxonomy; the codes are what the parser accepts.
const DEFINITIONS: [(Fbl9, &str); 9] = [
    (Fbl9::A, "x and y serve the same function and are used the same way."),
    (Fbl9::B1, "x can be replenished or refilled with y."),
    (Fbl9::B2, "y can be replenished or refilled with x."),
    (Fbl9::C1, "x and y only become usable when combined."),
    (Fbl9::C2, "combined with y, x becomes more useful."),
    (Fbl9::C3, "combined with x, y becomes more useful."),
    (Fbl9::C4, "combining x and y makes both more useful."),
    (Fbl9::D, "x and y have no relationship."),
    (Fbl9::E, "x and y seem related, but the relationship is hard to put into words."),
];

fn item_block(slot: &str, item: &Item) -> String {
    format!(
        "Item {slot}:\n  title: {}\n  description: {}\n  category: {} > {}\n",
        item.title.trim(),
        item.description.trim(),
        item.broad_category,
        item.fine_category
    )
}

/// Renders the annotation prompt for the ordered pair (x, y).
pub fn build_prompt(x: &Item, y: &Item) -> String {
    let mut out = String::from("Classify the functional relationship between item x and item y.\n\nCategories:\n");
    for (code, text) in DEFINITIONS {
        out.push_str(code.code());
        out.push_str(": ");
        out.push_str(text);
        out.push('\n');
    }
    out.push('\n');
    out.push_str(&item_block("x", x));
    out.push('\n');
    out.push_str(&item_block("y", y));
    out.push_str("\nAnswer with exactly one code from {");
    let codes: Vec<&str> = Fbl9::ALL.iter().map(|l| l.code()).collect();
    out.push_str(&codes.join(", "));
    out.push_str("} and nothing else.\n");
    out
}

/// Short stable digest of a prompt, used in cache keys.
pub fn prompt_hash(prompt: &str) -> String {
    format!("{:016x}", xxh3_64(prompt.as_bytes()))
}
