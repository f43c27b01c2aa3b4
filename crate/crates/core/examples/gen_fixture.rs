//! Writes the bundled Gerrit fixture corpus: 10 projects with 20 reviewed
//! changes each, plus noise the pipeline has to discard (courtesy comments,
//! replies, file-level comments, non-Java files, unchanged files and a
//! duplicate).
//!
//! cargo run -p revfix --example gen_fixture -- crates/core/tests/data/gerrit_fixture

use std::path::PathBuf;

use base64::Engine;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use revfix::miner::FixtureTransport;

const PROJECTS: usize = 10;
const PER_PROJECT: usize = 20;
const QUERY_PATH: &str = "/changes/?q=status%3Amerged&o=ALL_REVISIONS";
const EPOCH: i64 = 1_546_300_800; // 2019-01-01

const NOUNS: &[&str] = &[
    "order", "invoice", "ticket", "session", "account", "record", "message", "report", "task", "event",
    "batch", "entry", "route", "asset", "device", "member", "policy", "channel", "token", "bucket",
];
const LOCALS: &[&str] = &["tmp", "val", "res", "obj", "buf", "ret", "cnt", "x", "t", "item2"];
const GOOD: &[&str] = &["total", "count", "result", "current", "pending", "limit", "offset", "index", "matches", "width"];

fn cap(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

fn ts(secs: i64) -> String {
    chrono::DateTime::from_timestamp(secs, 0)
        .unwrap()
        .format("%Y-%m-%d %H:%M:%S%.9f")
        .to_string()
}

struct Edit {
    before: Vec<String>,
    after: Vec<String>,
    line: usize,
    comment: String,
}

/// A class whose body is a random selection of small methods, followed by
/// one reviewed edit.
fn make_edit(rng: &mut ChaCha8Rng, project: usize, idx: usize) -> Edit {
    let noun = *NOUNS.choose(rng).unwrap();
    let class = format!("{}{}", cap(noun), ["Store", "Service", "Registry", "Cache", "Queue"][idx % 5]);
    let field = format!("{noun}s");
    let counter = ["size", "limit", "capacity", "version"][rng.gen_range(0..4)];
    let mut lines: Vec<String> = vec![
        format!("package org.p{project}.{noun};\n"),
        "\n".into(),
        "import java.util.ArrayList;\n".into(),
        "import java.util.List;\n".into(),
        "\n".into(),
        "/**\n".into(),
        format!(" * Keeps track of {noun}s.\n"),
        " */\n".into(),
        format!("public class {class} {{\n"),
        format!("    private final List<String> {field} = new ArrayList<>();\n"),
        format!("    private int {counter};\n"),
        "\n".into(),
        format!("    public {class}(int {counter}) {{\n"),
        format!("        this.{counter} = {counter};\n"),
        "    }\n".into(),
        "\n".into(),
    ];
    let methods: Vec<Vec<String>> = vec![
        vec![
            "    public void add(String value) {\n".into(),
            format!("        {field}.add(value);\n"),
            format!("        {counter}++;\n"),
            "    }\n".into(),
        ],
        vec![
            "    public int count() {\n".into(),
            format!("        return {field}.size();\n"),
            "    }\n".into(),
        ],
        vec![
            "    public boolean contains(String key) {\n".into(),
            format!("        for (String s : {field}) {{\n"),
            "            if (s.equals(key)) {\n".into(),
            "                return true;\n".into(),
            "            }\n".into(),
            "        }\n".into(),
            "        return false;\n".into(),
            "    }\n".into(),
        ],
        vec![
            "    public String describe() {\n".into(),
            "        StringBuilder sb = new StringBuilder();\n".into(),
            format!("        for (String s : {field}) {{\n"),
            "            sb.append(s).append(',');\n".into(),
            "        }\n".into(),
            "        return sb.toString();\n".into(),
            "    }\n".into(),
        ],
        vec![
            "    public void clear() {\n".into(),
            format!("        {field}.clear();\n"),
            format!("        {counter} = 0;\n"),
            "    }\n".into(),
        ],
    ];
    let mut order: Vec<usize> = (0..methods.len()).collect();
    order.shuffle(rng);
    let keep = rng.gen_range(2..=4);
    for &m in &order[..keep] {
        lines.extend(methods[m].iter().cloned());
        lines.push("\n".into());
    }

    // The method under review.
    let old = *LOCALS.choose(rng).unwrap();
    let new = *GOOD.choose(rng).unwrap();
    let start = lines.len();
    let method = [
        format!("    public int {}(String key) {{\n", ["find", "lookup", "score", "weigh"][idx % 4]),
        format!("        int {old} = 0;\n"),
        format!("        for (String s : {field}) {{\n"),
        format!("            {old} += s.length();\n"),
        "        }\n".into(),
        format!("        return {old};\n"),
        "    }\n".into(),
    ];
    lines.extend(method.iter().cloned());
    lines.push("}\n".into());
    let mut before = lines.clone();
    let mut after = lines;

    let (focus, comment) = match rng.gen_range(0..6) {
        0 => {
            let l = start + 1;
            after[l] = format!("        int {new} = 0;\n");
            after[start + 3] = format!("            {new} += s.length();\n");
            after[start + 5] = format!("        return {new};\n");
            (l, format!("Please rename {old} to {new}, and update its uses."))
        }
        1 => {
            let debug = format!("        System.out.println(\"{old}=\" + {old});\n");
            before.insert(start + 5, debug);
            (start + 5, ["Remove this debug output", "Please drop the println", "No printing to stdout here"][rng.gen_range(0..3)].to_string())
        }
        2 => {
            after.insert(start + 1, "        if (key == null) {\n".into());
            after.insert(start + 2, "            return 0;\n".into());
            after.insert(start + 3, "        }\n".into());
            (start, "key may be null, guard against it".to_string())
        }
        3 => {
            let l = start + 3;
            before[l] = format!("            if (s == key) {{ {old} += s.length(); }}\n");
            after[l] = format!("            if (s.equals(key)) {{ {old} += s.length(); }}\n");
            (l, "Use equals to compare strings".to_string())
        }
        4 => {
            let l = 10;
            after[l] = format!("    private final int {counter};\n");
            before.iter_mut().chain(after.iter_mut()).for_each(|s| {
                if s.contains(&format!("        {counter}++;")) {
                    *s = format!("        {field}.trimToSize();\n");
                }
                if s.trim_start().starts_with(&format!("{counter} = 0;")) {
                    *s = "        // reset\n".into();
                }
            });
            (l, format!("{counter} is only set in the constructor, make it final"))
        }
        _ => {
            let l = start + 2;
            before[l] = format!("        for(String s : {field}) {{\n");
            (l, "Missing space after for".to_string())
        }
    };
    let focus = focus + 1;
    // Reviewers usually point at the line itself, sometimes a little off,
    // and now and then far enough away that localization drops the sample.
    let line = match rng.gen_range(0..20) {
        0 => focus + 10,
        1..=3 => focus + 2,
        4..=5 => focus.saturating_sub(1).max(1),
        _ => focus,
    }
    .min(before.len());
    Edit {
        before,
        after,
        line,
        comment,
    }
}

struct Fixture {
    t: FixtureTransport,
    changes: Vec<Value>,
}

impl Fixture {
    fn content(&self, change: &str, rev: &str, path: &str, text: &str) {
        let enc = path.replace('/', "%2F");
        let body = base64::engine::general_purpose::STANDARD.encode(text);
        self.t
            .record(&format!("/changes/{change}/revisions/{rev}/files/{enc}/content"), &body)
            .unwrap();
    }

    fn comments(&self, change: &str, rev: &str, comments: &Map<String, Value>) {
        let body = format!(")]}}'\n{}", serde_json::to_string_pretty(comments).unwrap());
        self.t.record(&format!("/changes/{change}/revisions/{rev}/comments"), &body).unwrap();
    }

    /// A change with two patchsets; the first carries the comments.
    fn change(&mut self, project: &str, number: u64, time: i64, files: &[(&str, &str, Option<&str>)], comments: Map<String, Value>) {
        let id = format!("{}~{number}", project.replace('/', "%2F"));
        let revs = [format!("{number:04}a"), format!("{number:04}b")];
        for (path, before, after) in files {
            self.content(&id, &revs[0], path, before);
            if let Some(a) = after {
                self.content(&id, &revs[1], path, a);
            }
        }
        self.comments(&id, &revs[0], &comments);
        self.comments(&id, &revs[1], &Map::new());
        self.changes.push(json!({
            "id": id,
            "project": project,
            "change_id": format!("I{:040x}", number * 7919 + 13),
            "_number": number,
            "updated": ts(time + 7200),
            "revisions": {
                revs[0].clone(): { "_number": 1, "created": ts(time) },
                revs[1].clone(): { "_number": 2, "created": ts(time + 3600) },
            }
        }));
    }
}

fn comment(id: &str, line: Option<usize>, message: &str, time: i64, reply_to: Option<&str>) -> Value {
    let mut c = json!({
        "id": id,
        "message": message,
        "updated": ts(time),
        "author": { "username": "reviewer" },
    });
    if let Some(l) = line {
        c["line"] = json!(l);
    }
    if let Some(r) = reply_to {
        c["in_reply_to"] = json!(r);
    }
    c
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/data/gerrit_fixture"));
    if out.exists() {
        std::fs::remove_dir_all(&out).unwrap();
    }
    let mut fx = Fixture {
        t: FixtureTransport::new(&out),
        changes: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut number = 1000u64;
    for p in 0..PROJECTS {
        let project = format!("platform/p{p}");
        for i in 0..PER_PROJECT {
            number += 1;
            let time = EPOCH + (i as i64) * 86_400 + (p as i64) * 3_600 + rng.gen_range(0..3_000);
            let e = make_edit(&mut rng, p, i);
            let before = e.before.concat();
            let after = e.after.concat();
            let path = format!("src/main/java/org/p{p}/F{i}.java");
            let mut list = vec![comment(&format!("c{number}"), Some(e.line), &e.comment, time + 600, None)];
            if i == 3 {
                list.push(comment(&format!("r{number}"), Some(e.line), "Done", time + 900, Some(&format!("c{number}"))));
                list.push(comment(&format!("f{number}"), None, "Overall this file looks fine", time + 900, None));
            }
            let mut files = vec![(path.as_str(), before.as_str(), Some(after.as_str()))];
            let mut comments = Map::new();
            comments.insert(path.clone(), Value::Array(list));
            if i == 5 {
                files.push(("README.md", "# notes\n", Some("# Notes\n")));
                comments.insert("README.md".into(), json!([comment(&format!("m{number}"), Some(1), "Capitalize the heading", time + 700, None)]));
            }
            fx.change(&project, number, time, &files, comments);
        }

        // Courtesy comment on a real change: dropped as noise.
        number += 1;
        let time = EPOCH + 30 * 86_400 + (p as i64) * 3_600;
        let e = make_edit(&mut rng, p, 90);
        let path = format!("src/main/java/org/p{p}/Noise.java");
        let mut comments = Map::new();
        comments.insert(path.clone(), json!([comment(&format!("c{number}"), Some(e.line), ["Done.", "Nit", "Thanks!", "same as above"][p % 4], time + 600, None)]));
        fx.change(&project, number, time, &[(&path, &e.before.concat(), Some(&e.after.concat()))], comments);

        // The next patchset leaves the file alone: flagged as no change.
        number += 1;
        let e = make_edit(&mut rng, p, 91);
        let path = format!("src/main/java/org/p{p}/Same.java");
        let text = e.before.concat();
        let mut comments = Map::new();
        comments.insert(path.clone(), json!([comment(&format!("c{number}"), Some(e.line), "Could this be simpler?", time + 600, None)]));
        fx.change(&project, number, time + 60, &[(&path, &text, Some(&text))], comments);

        // Deleted in the next patchset: skipped by assembly.
        if p % 3 == 0 {
            number += 1;
            let e = make_edit(&mut rng, p, 92);
            let path = format!("src/main/java/org/p{p}/Gone.java");
            let mut comments = Map::new();
            comments.insert(path.clone(), json!([comment(&format!("c{number}"), Some(e.line), "Is this class still needed?", time + 600, None)]));
            fx.change(&project, number, time + 120, &[(&path, &e.before.concat(), None)], comments);
        }
    }

    // A re-upload of an earlier change under a new number: deduplicated.
    let first = fx.changes[0].clone();
    let dup_number = number + 1;
    let src_id = first["id"].as_str().unwrap().to_string();
    let path = "src/main/java/org/p0/F0.java";
    let read = |rev: &str| {
        let enc = path.replace('/', "%2F");
        let raw = std::fs::read_to_string(fx.t.key_path(&format!("/changes/{src_id}/revisions/{rev}/files/{enc}/content"))).unwrap();
        String::from_utf8(base64::engine::general_purpose::STANDARD.decode(raw).unwrap()).unwrap()
    };
    let (before, after) = (read("1001a"), read("1001b"));
    let raw_comments = std::fs::read_to_string(fx.t.key_path(&format!("/changes/{src_id}/revisions/1001a/comments"))).unwrap();
    let parsed: Map<String, Value> = serde_json::from_str(raw_comments.trim_start_matches(")]}'\n")).unwrap();
    let mut list = parsed[path].as_array().unwrap().clone();
    list.truncate(1);
    list[0]["updated"] = json!(ts(EPOCH + 40 * 86_400));
    let mut comments = Map::new();
    comments.insert(path.into(), Value::Array(list));
    fx.change("platform/p0", dup_number, EPOCH + 40 * 86_400, &[(path, &before, Some(&after))], comments);

    let body = format!(")]}}'\n{}", serde_json::to_string_pretty(&fx.changes).unwrap());
    fx.t.record(QUERY_PATH, &body).unwrap();
    eprintln!("{} changes written to {}", fx.changes.len(), out.display());
}
