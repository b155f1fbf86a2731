use pulldown_cmark::{html, Options, Parser};

use super::doi::{ArchiveDoi, Doi};
use super::manuscript::Manuscript;

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Core CommonMark only; tables and footnotes stay literal text.
pub fn markdown_to_html(markdown: &str) -> String {
    let mut out = String::new();
    html::push_html(&mut out, Parser::new_ext(markdown, Options::empty()));
    out
}

/// Renders the article as a standalone HTML document. Output depends only on the inputs.
pub fn render_article(m: &Manuscript, doi: &Doi, archive: &ArchiveDoi) -> String {
    let title = escape_html(&m.title);
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    out.push_str(&format!("<title>{title}</title>\n"));
    out.push_str(&format!(
        "<meta name=\"citation_doi\" content=\"{}\">\n",
        escape_html(&doi.to_string())
    ));
    out.push_str("</head>\n<body>\n<article>\n<header>\n");
    out.push_str(&format!("<h1>{title}</h1>\n"));

    out.push_str("<ul class=\"authors\">\n");
    for author in &m.authors {
        out.push_str("<li>");
        out.push_str(&escape_html(&author.name));
        if !author.affiliation_indices.is_empty() {
            let marks: Vec<String> = author
                .affiliation_indices
                .iter()
                .map(u32::to_string)
                .collect();
            out.push_str(&format!("<sup>{}</sup>", marks.join(",")));
        }
        if let Some(orcid) = &author.orcid {
            out.push_str(&format!(
                " <a class=\"orcid\" href=\"https://orcid.org/{0}\">{0}</a>",
                escape_html(orcid)
            ));
        }
        out.push_str("</li>\n");
    }
    out.push_str("</ul>\n");

    if !m.affiliations.is_empty() {
        out.push_str("<ol class=\"affiliations\">\n");
        for aff in &m.affiliations {
            out.push_str(&format!(
                "<li value=\"{}\">{}</li>\n",
                aff.index,
                escape_html(&aff.name)
            ));
        }
        out.push_str("</ol>\n");
    }

    out.push_str(&format!(
        "<p class=\"doi\">DOI: <a href=\"{}\">{}</a></p>\n",
        escape_html(&doi.url()),
        escape_html(&doi.to_string())
    ));
    out.push_str(&format!(
        "<p class=\"archive\">Software archive: <a href=\"{}\">{}</a></p>\n",
        escape_html(&archive.url()),
        escape_html(archive.as_str())
    ));
    if let Some(date) = m.date {
        out.push_str(&format!(
            "<p class=\"date\">{}</p>\n",
            date.format("%-d %B %Y")
        ));
    }
    out.push_str("</header>\n<section class=\"body\">\n");
    out.push_str(&markdown_to_html(&m.body_markdown));
    out.push_str("</section>\n");

    if !m.bibliography.is_empty() {
        out.push_str("<section class=\"references\">\n<h2>References</h2>\n<ol>\n");
        for r in &m.bibliography {
            out.push_str(&format!("<li id=\"ref-{}\">", escape_html(&r.key)));
            out.push_str(&escape_html(r.title.as_deref().unwrap_or(&r.key)));
            if let Some(doi) = &r.doi {
                out.push_str(&format!(
                    ". <a href=\"https://doi.org/{0}\">doi:{0}</a>",
                    escape_html(doi)
                ));
            } else if let Some(url) = &r.url {
                out.push_str(&format!(". <a href=\"{0}\">{0}</a>", escape_html(url)));
            }
            out.push_str("</li>\n");
        }
        out.push_str("</ol>\n</section>\n");
    }
    out.push_str("</article>\n</body>\n</html>\n");
    out
}
