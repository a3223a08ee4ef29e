use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::repo::RepoContext;

/// The slice of repository context that fits into one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPack {
    pub repo_title: String,
    pub description: String,
    pub topics: Vec<String>,
    pub readme_excerpt: String,
    /// Focus first, then its ancestors and siblings, then the rest by depth.
    pub file_tree_excerpt: Vec<String>,
    pub focus_path: String,
    /// Paths of the full tree that were left out.
    pub omitted_paths: usize,
}

fn parent(path: &str) -> &str {
    path.rfind('/').map_or("", |i| &path[..i])
}

fn depth(path: &str) -> usize {
    path.matches('/').count()
}

/// Tree paths in packing priority order.
fn prioritized(tree: &[String], focus: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(tree.len() + 1);
    let mut push = |p: &str, out: &mut Vec<String>| {
        if !p.is_empty() && seen.insert(p.to_string()) {
            out.push(p.to_string());
        }
    };
    push(focus, &mut out);
    let mut ancestor = parent(focus);
    let mut ancestors = Vec::new();
    while !ancestor.is_empty() {
        ancestors.push(ancestor);
        ancestor = parent(ancestor);
    }
    for a in ancestors.into_iter().rev() {
        push(a, &mut out);
    }
    let dir = parent(focus);
    for p in tree.iter().filter(|p| parent(p) == dir) {
        push(p, &mut out);
    }
    let mut rest: Vec<&String> = tree.iter().collect();
    rest.sort_by(|a, b| depth(a).cmp(&depth(b)).then_with(|| a.cmp(b)));
    for p in rest {
        push(p, &mut out);
    }
    out
}

/// Cuts `text` to at most `max` characters at a line boundary, or mid-line
/// when not even one line fits.
pub(crate) fn cut_at_line(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    let mut out = String::new();
    let mut used = 0;
    for line in text.split_inclusive('\n') {
        let n = line.chars().count();
        if used + n > max {
            break;
        }
        out.push_str(line);
        used += n;
    }
    if out.is_empty() {
        out = text.chars().take(max).collect();
    }
    out
}

impl ContextPack {
    /// Builds a pack whose rendered section is at most `budget` characters.
    ///
    /// The README may take up to a third of the budget; tree paths fill the
    /// rest in priority order, then the README takes whatever is left.
    pub fn build(ctx: &RepoContext, focus: &str, budget: usize) -> Self {
        let total = prioritized(&ctx.file_tree, focus);
        let mut pack = ContextPack {
            repo_title: ctx.title.clone(),
            description: ctx.description.clone(),
            topics: ctx.topics.clone(),
            readme_excerpt: String::new(),
            file_tree_excerpt: Vec::new(),
            focus_path: focus.to_string(),
            omitted_paths: total.len(),
        };
        let readme = ctx.readme_excerpt.replace("\r\n", "\n");
        let readme = readme.trim_end();
        let base = pack.render().chars().count();
        if base > budget {
            pack.description = cut_at_line(&pack.description, pack.description.chars().count().saturating_sub(base - budget));
            pack.topics.clear();
        }

        let reserve = if readme.is_empty() {
            0
        } else {
            (README_HEADER.len() + readme.chars().count() + 1).min(budget / 3)
        };
        // The header's digit widths only shrink as paths are added, so the
        // length measured with every path omitted is an upper bound.
        let mut used = pack.render().chars().count() + reserve;
        for (i, path) in total.iter().enumerate() {
            let cost = path.chars().count() + 3;
            if used + cost > budget {
                break;
            }
            used += cost;
            pack.file_tree_excerpt.push(path.clone());
            pack.omitted_paths = total.len() - i - 1;
        }

        if !readme.is_empty() {
            let left = budget.saturating_sub(pack.render().chars().count() + README_HEADER.len() + 1);
            pack.readme_excerpt = cut_at_line(readme, left).trim_end().to_string();
        }
        while pack.render().chars().count() > budget {
            if pack.readme_excerpt.pop().is_none() && pack.file_tree_excerpt.pop().is_none() {
                break;
            }
            pack.readme_excerpt.truncate(pack.readme_excerpt.trim_end().len());
        }
        pack
    }

    /// Drops tree entries so only the first `keep` remain.
    pub fn shrink_tree(&mut self, keep: usize) {
        if keep < self.file_tree_excerpt.len() {
            self.omitted_paths += self.file_tree_excerpt.len() - keep;
            self.file_tree_excerpt.truncate(keep);
        }
    }

    pub fn shrink_readme(&mut self, max_chars: usize) {
        self.readme_excerpt = cut_at_line(&self.readme_excerpt, max_chars).trim_end().to_string();
    }

    pub fn topics_line(&self) -> String {
        self.topics.join(", ")
    }

    pub fn tree_lines(&self) -> String {
        self.file_tree_excerpt.iter().map(|p| format!("- {p}\n")).collect()
    }

    /// The context section as embedded in prompts. Empty parts are omitted.
    pub fn render(&self) -> String {
        let mut out = format!("Repository: {}\n", self.repo_title);
        if !self.description.trim().is_empty() {
            out.push_str(&format!("Description: {}\n", self.description.trim()));
        }
        if !self.topics.is_empty() {
            out.push_str(&format!("Topics: {}\n", self.topics_line()));
        }
        out.push_str(&format!("Focus file: {}\n", self.focus_path));
        let shown = self.file_tree_excerpt.len();
        out.push_str(&format!(
            "File tree ({shown} of {} paths):\n",
            shown + self.omitted_paths
        ));
        out.push_str(&self.tree_lines());
        if !self.readme_excerpt.is_empty() {
            out.push_str(README_HEADER);
            out.push_str(&self.readme_excerpt);
            out.push('\n');
        }
        out.truncate(out.trim_end().len());
        out
    }
}

const README_HEADER: &str = "README excerpt:\n";
