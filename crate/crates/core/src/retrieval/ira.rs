use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use super::{
    compile, expand, extract, Diagnostic, Discovery, Fetcher, ProductObservation, RetrievalError, SearchPattern,
    ShopRecord, SnippetPattern,
};
use crate::kb::{Assertion, Decimal, Fact, Literal, Ontology, Provenance, Value};
use crate::olap::Dimension;

/// Case-folded, punctuation stripped, whitespace collapsed.
pub fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn ident_words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_string).collect()
}

fn shop_id(host: &str) -> String {
    format!("Shop_{}", ident_words(host).join("_"))
}

/// Reads every seed page and returns the shops it links to that are not in
/// `registry`, ordered by url.
pub fn discover_shops(
    discovery: &Discovery,
    registry: &[ShopRecord],
    fetcher: &dyn Fetcher,
    today: NaiveDate,
) -> Result<(Vec<ShopRecord>, Vec<Diagnostic>), RetrievalError> {
    let link = compile("discovery", "link", &discovery.link)?;
    let known: BTreeSet<&str> = registry.iter().flat_map(|r| [r.url.as_str(), r.id.as_str()]).collect();
    let mut found = BTreeMap::new();
    let mut diags = Vec::new();
    for seed in &discovery.seeds {
        let page = match fetcher.fetch(seed) {
            Ok(p) => p,
            Err(e) => {
                diags.push(Diagnostic::new(seed, e.to_string()));
                continue;
            }
        };
        for c in link.captures_iter(&page) {
            let raw = c.get(1).map_or("", |m| m.as_str()).trim();
            let parsed = url::Url::parse(raw).ok().filter(|u| matches!(u.scheme(), "http" | "https"));
            let Some((u, host)) = parsed.and_then(|u| u.host_str().map(str::to_string).map(|h| (u, h))) else {
                diags.push(Diagnostic::new(seed, format!("malformed shop url `{raw}`")));
                continue;
            };
            let url = u.to_string();
            let id = shop_id(&host);
            if known.contains(url.as_str()) || known.contains(id.as_str()) {
                continue;
            }
            found.entry(url.clone()).or_insert(ShopRecord { id, url, discovered: today });
        }
    }
    Ok((found.into_values().collect(), diags))
}

/// Searches one shop for `query`. Items missing a required field are
/// dropped with a diagnostic.
pub fn scrape(
    shop: &ShopRecord,
    pattern: &SearchPattern,
    query: &str,
    fetcher: &dyn Fetcher,
    today: NaiveDate,
) -> Result<(Vec<ProductObservation>, Vec<Diagnostic>), RetrievalError> {
    let compiled = pattern.compiled()?;
    let url = pattern.url_for(&shop.url, query)?;
    let page = match fetcher.fetch(&url) {
        Ok(p) => p,
        Err(e) => return Ok((vec![], vec![Diagnostic::new(url, e.to_string())])),
    };
    let fields: Vec<(&str, &regex::Regex)> = compiled.fields.iter().map(|(f, r)| (*f, r)).collect();
    let items = extract(&compiled.block, &fields, &page);
    let mut out = Vec::new();
    let mut diags = Vec::new();
    if items.is_empty() {
        diags.push(Diagnostic::new(&url, format!("pattern `{}` matched nothing", pattern.name)));
    }
    for (i, item) in items.iter().enumerate() {
        let get = |f: &str| item.get(f).copied().flatten();
        let missing: Vec<&str> =
            ["name", "brand", "price", "currency"].into_iter().filter(|f| get(f).is_none()).collect();
        if !missing.is_empty() {
            diags.push(Diagnostic::new(&url, format!("item {i} dropped: missing {}", missing.join(", "))));
            continue;
        }
        let price_text = get("price").unwrap();
        let price = match Decimal::parse_localized(price_text) {
            Ok(p) if !p.is_negative() => p,
            _ => {
                diags.push(Diagnostic::new(&url, format!("item {i} dropped: bad price `{price_text}`")));
                continue;
            }
        };
        out.push(ProductObservation {
            name: get("name").unwrap().to_string(),
            brand: get("brand").unwrap().to_string(),
            price,
            price_text: price_text.to_string(),
            currency: get("currency").unwrap().to_string(),
            availability: get("availability").map(str::to_string),
            shop: shop.id.clone(),
            observed: today,
        });
    }
    Ok((out, diags))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NewPhones {
    /// Individuals newly classified as NewPhone, in assertion order.
    pub phones: Vec<String>,
    /// Brand texts that matched no PhoneBrand individual.
    pub unknown_brands: Vec<String>,
    pub assertions: Vec<Assertion>,
}

fn names_of(kb: &Ontology, class: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for id in kb.instances_of(class) {
        out.entry(normalize_name(&id.replace('_', " "))).or_insert_with(|| id.to_string());
        for v in kb.objects(id, "hasName") {
            if let Some(Literal::String(s)) = v.as_literal() {
                out.insert(normalize_name(s), id.to_string());
            }
        }
    }
    out
}

fn new_phone_id(kb: &Ontology, name: &str, brand: Option<(&str, &str)>) -> String {
    let mut words = ident_words(name);
    let base = match brand {
        Some((id, brand_text)) => {
            let bw = ident_words(brand_text);
            let lower = |v: &[String]| v.iter().map(|w| w.to_lowercase()).collect::<Vec<_>>();
            if words.len() > bw.len() && lower(&words[..bw.len()]) == lower(&bw) {
                words.drain(..bw.len());
            }
            if words.is_empty() {
                words.push("Phone".into());
            }
            format!("{id}_{}", words.join("_"))
        }
        None if words.is_empty() => "Phone".to_string(),
        None if words[0].starts_with(|c: char| c.is_ascii_digit()) => format!("Phone_{}", words.join("_")),
        None => words.join("_"),
    };
    let mut id = base.clone();
    let mut n = 2;
    while kb.contains_individual(&id) {
        id = format!("{base}_{n}");
        n += 1;
    }
    id
}

/// Classifies observed phones the kb does not know as NewPhone and records
/// every observation as an Offer.
pub fn detect_new_phones(
    observations: &[ProductObservation],
    kb: &mut Ontology,
    today: NaiveDate,
) -> Result<NewPhones, RetrievalError> {
    let mut phones = names_of(kb, "Phone");
    let brands = names_of(kb, "PhoneBrand");
    let mut out = NewPhones::default();
    let mut sorted: Vec<&ProductObservation> = observations.iter().collect();
    sorted.sort_by_key(|o| (normalize_name(&o.name), o.shop.clone(), o.price, o.currency.clone()));

    let put = |kb: &mut Ontology, fact: Fact, out: &mut NewPhones| -> Result<bool, RetrievalError> {
        let a = Assertion::new(fact, Provenance::Retrieval);
        let added = kb.assert_fact(a.clone())?;
        if added {
            out.assertions.push(a);
        }
        Ok(added)
    };

    for o in sorted {
        let key = normalize_name(&o.name);
        let phone = match phones.get(&key) {
            Some(id) => id.clone(),
            None => {
                let brand = brands.get(&normalize_name(&o.brand));
                let id = new_phone_id(kb, &o.name, brand.map(|b| (b.as_str(), o.brand.as_str())));
                put(kb, Fact::instance(&id, "NewPhone"), &mut out)?;
                out.phones.push(id.clone());
                put(kb, Fact::property(&id, "hasName", Value::str(&o.name)), &mut out)?;
                match brand {
                    Some(b) => put(kb, Fact::property(&id, "hasCharacteristic", Value::ind(b)), &mut out)?,
                    None => {
                        out.unknown_brands.push(o.brand.clone());
                        put(kb, Fact::property(&id, "unknownBrandName", Value::str(&o.brand)), &mut out)?
                    }
                };
                put(kb, Fact::property(&id, "hasDateOfAppearance", Value::date(today)), &mut out)?;
                phones.insert(key, id.clone());
                id
            }
        };
        put(kb, Fact::instance(&o.shop, "OnlineShop"), &mut out)?;
        let offer = format!("Offer_{phone}_{}_{}", o.shop, o.observed.format("%Y%m%d"));
        put(kb, Fact::instance(&offer, "Offer"), &mut out)?;
        put(kb, Fact::property(&offer, "offeredPhone", Value::ind(&phone)), &mut out)?;
        put(kb, Fact::property(&offer, "offeredBy", Value::ind(&o.shop)), &mut out)?;
        put(kb, Fact::property(&offer, "hasPrice", Value::dec(o.price)), &mut out)?;
        put(kb, Fact::property(&offer, "hasCurrency", Value::str(&o.currency)), &mut out)?;
        put(kb, Fact::property(&offer, "observedOn", Value::date(o.observed)), &mut out)?;
    }
    Ok(out)
}

fn document_id(url: &str) -> String {
    format!("Doc_{}", &hex::encode(Sha256::digest(url.as_bytes()))[..12])
}

/// Searches every snippet source for each dimension member that has a kb
/// individual and links the documents found to it.
pub fn enrich_dimension(
    kb: &mut Ontology,
    dimension: &Dimension,
    fetcher: &dyn Fetcher,
    patterns: &[SnippetPattern],
) -> Result<(Vec<Assertion>, Vec<Diagnostic>), RetrievalError> {
    let compiled = patterns.iter().map(|p| p.compiled().map(|c| (p, c))).collect::<Result<Vec<_>, _>>()?;
    let mut added = Vec::new();
    let mut diags = Vec::new();
    for member in &dimension.members {
        let Some(ind) = member.kb.as_deref() else { continue };
        if !kb.contains_individual(ind) || !kb.is_instance_of(ind, "AnalysisElement")? {
            continue;
        }
        for (pattern, c) in &compiled {
            let url = expand(&pattern.name, &pattern.url, member.label())?;
            let page = match fetcher.fetch(&url) {
                Ok(p) => p,
                Err(e) => {
                    diags.push(Diagnostic::new(&url, e.to_string()));
                    continue;
                }
            };
            let fields: Vec<(&str, &regex::Regex)> = c.fields.iter().map(|(f, r)| (*f, r)).collect();
            for (i, item) in extract(&c.block, &fields, &page).into_iter().enumerate() {
                let (Some(title), Some(link), Some(date)) = (item["title"], item["url"], item["date"]) else {
                    diags.push(Diagnostic::new(&url, format!("item {i} dropped: missing field")));
                    continue;
                };
                let Ok(date) = NaiveDate::parse_from_str(date, "%Y-%m-%d") else {
                    diags.push(Diagnostic::new(&url, format!("item {i} dropped: bad date `{date}`")));
                    continue;
                };
                let doc = document_id(link);
                let mut facts = vec![];
                if !kb.contains_individual(&doc) {
                    facts.extend([
                        Fact::instance(&doc, "Document"),
                        Fact::property(&doc, "hasTitle", Value::str(title)),
                        Fact::property(&doc, "hasUrl", Value::str(link)),
                        Fact::property(&doc, "publishedOn", Value::date(date)),
                    ]);
                }
                facts.push(Fact::property(ind, "hasDocument", Value::ind(&doc)));
                for f in facts {
                    let a = Assertion::new(f, Provenance::Retrieval);
                    if kb.assert_fact(a.clone())? {
                        added.push(a);
                    }
                }
            }
        }
    }
    Ok((added, diags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_name("  Nokia   E-72 "), "nokia e72");
        assert_eq!(normalize_name("Apple iPhone 3GS!"), "apple iphone 3gs");
    }

    #[test]
    fn phone_ids() {
        let kb = Ontology::new();
        assert_eq!(new_phone_id(&kb, "Sony Ericsson Xperia X1", Some(("SonyEricsson", "Sony Ericsson"))), "SonyEricsson_Xperia_X1");
        assert_eq!(new_phone_id(&kb, "E72", Some(("Nokia", "Nokia"))), "Nokia_E72");
        assert_eq!(new_phone_id(&kb, "Zeta Z1", None), "Zeta_Z1");
        assert_eq!(new_phone_id(&kb, "3310", None), "Phone_3310");
    }
}
