use crate::model::{CellValue, ComparisonSummary};

fn esc(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn cell_text(cells: &[CellValue]) -> String {
    if cells.is_empty() {
        return "-".into();
    }
    cells
        .iter()
        .map(|c| {
            if c.support_count > 1 {
                format!("{} ({})", esc(&c.value), c.support_count)
            } else {
                esc(&c.value)
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Markdown table: attribute | A | B | sources. Sources are numbered
/// footnotes listed under the table.
pub fn render_markdown(summary: &ComparisonSummary) -> String {
    let a = &summary.entity_a.display_name;
    let b = &summary.entity_b.display_name;
    let mut urls: Vec<&str> = Vec::new();
    let mut out = format!("# {} vs {}\n\n", esc(a), esc(b));
    if summary.rows.is_empty() {
        out.push_str("No comparable attributes found.\n");
        return out;
    }
    out.push_str(&format!("| Attribute | {} | {} | Sources |\n|---|---|---|---|\n", esc(a), esc(b)));
    for row in &summary.rows {
        let mut refs = Vec::new();
        for c in row.cell_a.iter().chain(&row.cell_b) {
            for u in &c.source_urls {
                let n = match urls.iter().position(|x| x == u) {
                    Some(n) => n,
                    None => {
                        urls.push(u);
                        urls.len() - 1
                    }
                };
                let tag = format!("[{}]", n + 1);
                if !refs.contains(&tag) {
                    refs.push(tag);
                }
            }
        }
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            esc(&row.attribute),
            cell_text(&row.cell_a),
            cell_text(&row.cell_b),
            refs.join(" ")
        ));
    }
    out.push('\n');
    for (n, u) in urls.iter().enumerate() {
        out.push_str(&format!("[{}]: {}\n", n + 1, u));
    }
    out
}
