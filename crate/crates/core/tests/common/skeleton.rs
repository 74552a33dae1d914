//! Instantiates the JSON skeleton embedded in the alignment template.

#![allow(dead_code)]

use pasg_core::aligner::ALIGN_TEMPLATE;

/// The JSON skeleton shown in the alignment template, with the
/// placeholders filled in and its comma slips repaired.
pub fn instantiated_skeleton() -> String {
    let start = ALIGN_TEMPLATE.find("\n{\n").expect("skeleton start") + 1;
    let end = ALIGN_TEMPLATE[start..].find("\n}\n").expect("skeleton end") + start + 2;
    let skeleton = &ALIGN_TEMPLATE[start..end];

    // per block: pos id, p1, oriented pair (only used where [x, y] appears), p2
    let values = [(4, 0.92, "[4, 9]", 0.81), (7, 0.88, "", 0.95), (2, 0.77, "", 0.9)];
    let mut block = 0usize;
    let mut lines: Vec<String> = Vec::new();
    for line in skeleton.lines() {
        let (pos, p1, pair, p2) = values[block.min(2)];
        let mut l = line.to_string();
        if l.contains("\"pos_ID\": n") {
            l = l.replace("\"pos_ID\": n", &format!("\"pos_ID\": {pos}"));
        }
        l = l.replace("p_1", &p1.to_string()).replace("p_2", &p2.to_string());
        if l.contains("\"ori_ID\": [x, y]") {
            l = l.replace("[x, y]", pair);
        }
        if l.contains("\"Description\"") {
            block += 1;
        }
        lines.push(l);
    }
    repair_commas(&lines)
}

fn repair_commas(lines: &[String]) -> String {
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let next = lines[i + 1..].iter().map(|l| l.trim()).find(|l| !l.is_empty()).unwrap_or("");
        let cur = line.trim_end();
        let fixed = if cur.ends_with(',') && (next.starts_with(']') || next.starts_with('}')) {
            cur[..cur.len() - 1].to_string()
        } else if !cur.is_empty()
            && !cur.ends_with([',', '{', '['])
            && (next.starts_with('"') || next.starts_with('{'))
        {
            format!("{cur},")
        } else {
            cur.to_string()
        };
        out.push(fixed);
    }
    out.join("\n") + "\n"
}
