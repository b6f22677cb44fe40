use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use html5ever::tendril::TendrilSink;
use markup5ever_rcdom::{Handle, NodeData, RcDom};

fn collect_links(node: &Handle, out: &mut Vec<String>) {
    if let NodeData::Element { attrs, .. } = &node.data {
        for a in attrs.borrow().iter() {
            let name = a.name.local.as_ref();
            if name == "href" || name == "src" {
                out.push(a.value.to_string());
            }
        }
    }
    for child in node.children.borrow().iter() {
        collect_links(child, out);
    }
}

/// Parses a page strictly; returns its links.
fn parse_page(path: &Path) -> Vec<String> {
    let bytes = std::fs::read(path).unwrap();
    let dom = html5ever::parse_document(RcDom::default(), Default::default())
        .from_utf8()
        .read_from(&mut bytes.as_slice())
        .unwrap();
    let errors = &dom.errors;
    assert!(errors.is_empty(), "{}: {:?}", path.display(), errors);
    let mut links = Vec::new();
    collect_links(&dom.document, &mut links);
    links
}

pub fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

fn resolve(page: &Path, link: &str) -> PathBuf {
    let mut parts: Vec<String> = page.parent().unwrap().components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    for seg in link.split('/') {
        match seg {
            ".." => {
                parts.pop();
            }
            "." | "" => {}
            s => parts.push(s.to_string()),
        }
    }
    parts.iter().collect()
}

/// Every page parses without errors and every internal link hits an emitted file.
pub fn check_site(root: &Path) {
    let files = files_under(root);
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "html")) {
        for link in parse_page(&root.join(f)) {
            if link.starts_with("http://") || link.starts_with("https://") || link.starts_with('#') {
                continue;
            }
            let target = resolve(f, &link);
            assert!(files.contains(&target), "{} links to missing {}", f.display(), link);
        }
    }
    let feed = std::fs::read_to_string(root.join("feed.xml")).unwrap();
    let doc = roxmltree::Document::parse(&feed).unwrap();
    assert_eq!(doc.root_element().attribute("version"), Some("2.0"));
}
