//! Word banks and the shared value-type pool the generator draws from.
//!
//! Every bank is small and closed so the whole corpus stays well under two
//! thousand word types.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Gen = fn(&mut ChaCha8Rng) -> Vec<String>;

pub(crate) struct ValueTypeDef {
    pub label: &'static str,
    /// Key phrase variants, words separated by spaces.
    pub keys: &'static [&'static str],
    /// Lead-in text used when the value is rendered with an implicit key.
    pub cue: &'static str,
    pub gen: Gen,
}

const FIRST_NAMES: &[&str] = &[
    "Wei", "Fang", "Jing", "Lei", "Min", "Tao", "Yan", "Hui", "Ping", "Qiang", "Xiu", "Jun",
    "Ling", "Bo", "Hong", "Anna", "James", "Maria", "David", "Sofia", "Lucas", "Emma", "Noah",
    "Olga", "Ivan", "Chen", "Mei", "Kai", "Rui", "Zhen",
];
const LAST_NAMES: &[&str] = &[
    "Li", "Wang", "Zhang", "Liu", "Yang", "Huang", "Zhao", "Wu", "Zhou", "Xu", "Sun", "Ma", "Zhu",
    "Hu", "Guo", "He", "Lin", "Luo", "Gao", "Smith", "Brown", "Garcia", "Muller", "Rossi", "Silva",
    "Novak", "Kim", "Tanaka", "Dubois", "Costa",
];
const COMPANY_HEADS: &[&str] = &[
    "Hengda", "Jinhui", "Tianyu", "Huaxin", "Zhongke", "Minsheng", "Dongfang", "Xinghe",
    "Baoli", "Ruifeng", "Longxiang", "Yuantong", "Anbang", "Guangming", "Shenghua", "Kaiyuan",
    "Northwind", "Bluepeak", "Redstone", "Silverline", "Greenfield", "Eastgate", "Brightway",
    "Oakridge", "Sunrise",
];
const COMPANY_TRADES: &[&str] = &[
    "Trading", "Logistics", "Electronics", "Construction", "Textile", "Pharma", "Software",
    "Machinery", "Foods", "Chemical", "Energy", "Media", "Packaging", "Auto", "Steel",
];
const COMPANY_SUFFIX: &[&[&str]] = &[&["Co", "Ltd"], &["Group"], &["Inc"], &["Corp"], &["LLC"]];
const STREETS: &[&str] = &[
    "Furong", "Wuyi", "Renmin", "Jiefang", "Zhongshan", "Xiangjiang", "Binhe", "Yuelu", "Huanghe",
    "Changjiang", "Maple", "Cedar", "Harbor", "Lakeview", "Hillside", "Riverside", "Orchard",
    "Kingsway", "Victoria", "Station",
];
const ROAD_KINDS: &[&str] = &["Road", "Street", "Avenue", "Lane", "Boulevard"];
const CITIES: &[&str] = &[
    "Changsha", "Wuhan", "Hangzhou", "Chengdu", "Nanjing", "Xiamen", "Suzhou", "Jinan", "Kunming",
    "Harbin", "Shenzhen", "Tianjin", "Lanzhou", "Hefei", "Fuzhou", "Guiyang", "Nanning", "Taiyuan",
    "Dalian", "Qingdao",
];
const PROVINCES: &[&str] = &[
    "Hunan", "Hubei", "Zhejiang", "Sichuan", "Jiangsu", "Fujian", "Yunnan", "Shandong", "Guangdong",
    "Henan", "Anhui", "Jiangxi",
];
const DEPARTMENTS: &[&str] = &[
    "Natural Resources", "Market Regulation", "Public Security", "Taxation", "Commerce",
    "Housing", "Transport", "Health", "Education", "Civil Affairs", "Customs", "Ecology",
];
const AGENCY_KINDS: &[&str] = &["Bureau", "Office", "Administration", "Commission"];
const BANKS: &[&str] = &[
    "Industrial", "Agricultural", "Construction", "Merchants", "Everbright", "Pudong", "Huaxia",
    "Minsheng", "Ningbo", "Harbor", "Continental", "Pacific", "Union", "Citizens", "Frontier",
];
const MONTHS: &[&str] = &[
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
const PRODUCT_ADJ: &[&str] = &[
    "Stainless", "Portable", "Digital", "Wireless", "Industrial", "Organic", "Compact", "Heavy",
    "Thermal", "Premium", "Modular", "Smart", "Ceramic", "Hydraulic", "Solar",
];
const PRODUCT_NOUN: &[&str] = &[
    "Valve", "Pump", "Monitor", "Router", "Cable", "Fertilizer", "Bearing", "Sensor", "Panel",
    "Printer", "Battery", "Motor", "Filter", "Tile", "Bracket",
];
const UNITS: &[&str] = &["pcs", "kg", "sets", "boxes", "tons", "rolls"];
const NATIONALITIES: &[&str] = &[
    "Chinese", "French", "German", "Brazilian", "Italian", "Japanese", "Korean", "Russian",
    "Spanish", "Canadian", "Indian", "Mexican",
];
const MAIL_DOMAINS: &[&str] = &["mail.com", "corp.cn", "post.net", "inbox.org", "biz.cn"];
const JOB_LEVELS: &[&str] = &["Senior", "Junior", "Chief", "Assistant", "Lead", "Deputy"];
const JOB_ROLES: &[&str] = &[
    "Engineer", "Accountant", "Manager", "Auditor", "Designer", "Analyst", "Inspector", "Clerk",
    "Surveyor", "Architect",
];
const PLATE_PREFIX: &[&str] = &["XiangA", "EA", "ZheA", "ChuanA", "SuA", "MinD", "YunA", "LuB"];
const CAPITAL_UNITS: &[&str] = &["million", "thousand"];
const CURRENCIES: &[&str] = &["CNY", "USD", "EUR"];
const BLOOD_TYPES: &[&str] = &["A", "B", "AB", "O"];

/// Filler words for titles, footers, remarks and implicit-key cue text.
pub(crate) const FILLER: &[&str] = &[
    "Remarks", "Seal", "Signature", "Page", "of", "Copy", "Original", "Verified", "Approved",
    "Stamp", "Notes", "Serial", "Issued", "Valid", "Register", "Official", "Printed", "Duplicate",
];

pub(crate) const FORM_QUALIFIERS: &[&str] = &[
    "vat", "business", "property", "vehicle", "customs", "tax", "medical", "marriage", "land",
    "patent", "software", "export", "insurance", "residence", "driving", "bank", "rental",
    "import", "pension", "trade",
];
pub(crate) const FORM_KINDS: &[&str] = &[
    "invoice", "certificate", "license", "permit", "receipt", "contract", "register",
    "declaration", "statement", "notice", "record", "card", "voucher", "agreement", "report",
    "bill", "form", "deed", "warrant", "copyright",
];

fn pick(rng: &mut ChaCha8Rng, bank: &[&str]) -> String {
    bank.choose(rng).expect("bank is non-empty").to_string()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn date(rng: &mut ChaCha8Rng, years: std::ops::RangeInclusive<u32>) -> Vec<String> {
    vec![
        rng.random_range(years).to_string(),
        pick(rng, MONTHS),
        rng.random_range(1..=28u32).to_string(),
    ]
}

fn amount(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> String {
    let whole = rng.random_range(lo..hi) * 10;
    if whole >= 1000 {
        format!("{},{:03}.00", whole / 1000, whole % 1000)
    } else {
        format!("{whole}.50")
    }
}

fn code(rng: &mut ChaCha8Rng, prefix: &str, n: u32) -> String {
    format!("{prefix}{:04}", rng.random_range(0..n) * 97 % 10_000)
}

fn person_name(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, FIRST_NAMES), pick(rng, LAST_NAMES)]
}

fn company_name(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = vec![pick(rng, COMPANY_HEADS), pick(rng, COMPANY_TRADES)];
    out.extend(COMPANY_SUFFIX.choose(rng).unwrap().iter().map(|s| s.to_string()));
    out
}

fn address(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![
        format!("No.{}", rng.random_range(1..=60u32)),
        pick(rng, STREETS),
        pick(rng, ROAD_KINDS),
        pick(rng, CITIES),
    ]
}

fn phone(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![
        "+86".into(),
        format!("1{}", rng.random_range(30..=39u32) * 10 + rng.random_range(0..2u32)),
        format!("{:04}", rng.random_range(0..60u32) * 163 % 10_000),
    ]
}

fn issue_date(rng: &mut ChaCha8Rng) -> Vec<String> {
    date(rng, 2010..=2020)
}

fn expiry_date(rng: &mut ChaCha8Rng) -> Vec<String> {
    date(rng, 2026..=2036)
}

fn birth_date(rng: &mut ChaCha8Rng) -> Vec<String> {
    date(rng, 1950..=1999)
}

fn total_amount(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, CURRENCIES), amount(rng, 100, 160)]
}

fn tax_amount(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![amount(rng, 5, 60)]
}

fn invoice_number(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![code(rng, "INV", 80)]
}

fn id_number(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![format!("43{:04}X", rng.random_range(0..80u32) * 211 % 10_000)]
}

fn issuing_authority(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = vec![pick(rng, CITIES)];
    out.extend(words(DEPARTMENTS.choose(rng).unwrap()));
    out.push(pick(rng, AGENCY_KINDS));
    out
}

fn bank_name(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, BANKS), "Bank".into(), pick(rng, CITIES), "Branch".into()]
}

fn account_number(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![
        format!("62{:02}", rng.random_range(10..40u32)),
        format!("{:04}", rng.random_range(0..50u32) * 173 % 10_000),
        format!("{:04}", rng.random_range(0..50u32) * 331 % 10_000),
    ]
}

fn email(rng: &mut ChaCha8Rng) -> Vec<String> {
    let first = FIRST_NAMES.choose(rng).unwrap().to_lowercase();
    vec![format!("{first}@{}", pick(rng, MAIL_DOMAINS))]
}

fn product_name(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, PRODUCT_ADJ), pick(rng, PRODUCT_NOUN)]
}

fn quantity(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![format!("x{}", rng.random_range(1..=40u32)), pick(rng, UNITS)]
}

fn unit_price(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![format!("@{}.{:02}", rng.random_range(1..=60u32), rng.random_range(0..4u32) * 25)]
}

fn license_number(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![code(rng, "LIC", 60)]
}

fn gender(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, &["Male", "Female"])]
}

fn nationality(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, NATIONALITIES)]
}

fn postal_code(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![format!("{}0{:03}", rng.random_range(10..=60u32), rng.random_range(0..8u32) * 11)]
}

fn registered_capital(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![
        rng.random_range(1..=90u32).to_string(),
        pick(rng, CAPITAL_UNITS),
        pick(rng, CURRENCIES),
    ]
}

fn plate_number(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, PLATE_PREFIX), code(rng, "P", 70)]
}

fn job_title(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, JOB_LEVELS), pick(rng, JOB_ROLES)]
}

fn province(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![pick(rng, PROVINCES), "Province".into()]
}

fn blood_type(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![format!("Type-{}", pick(rng, BLOOD_TYPES))]
}

pub(crate) const VALUE_TYPES: &[ValueTypeDef] = &[
    ValueTypeDef { label: "account_number", keys: &["Account No", "Bank Account", "Acct Number"], cue: "remit to", gen: account_number },
    ValueTypeDef { label: "address", keys: &["Address", "Current Address", "Domicile"], cue: "residing at", gen: address },
    ValueTypeDef { label: "bank_name", keys: &["Bank", "Opening Bank", "Bank of Deposit"], cue: "deposited with", gen: bank_name },
    ValueTypeDef { label: "birth_date", keys: &["Date of Birth", "Birth Date", "Born"], cue: "born on", gen: birth_date },
    ValueTypeDef { label: "blood_type", keys: &["Blood Type", "Blood Group"], cue: "blood is", gen: blood_type },
    ValueTypeDef { label: "company_name", keys: &["Company", "Company Name", "Seller", "Enterprise"], cue: "issued to", gen: company_name },
    ValueTypeDef { label: "email", keys: &["Email", "E-mail Address", "Mailbox"], cue: "write to", gen: email },
    ValueTypeDef { label: "expiry_date", keys: &["Expiry Date", "Valid Until", "Date of Expiry"], cue: "valid until", gen: expiry_date },
    ValueTypeDef { label: "gender", keys: &["Gender", "Sex"], cue: "recorded as", gen: gender },
    ValueTypeDef { label: "id_number", keys: &["ID No", "Identity Number", "Citizen ID"], cue: "holder of", gen: id_number },
    ValueTypeDef { label: "invoice_number", keys: &["Invoice No", "Invoice Number", "Serial No"], cue: "numbered", gen: invoice_number },
    ValueTypeDef { label: "issue_date", keys: &["Issue Date", "Date of Issue", "Issued On"], cue: "issued on", gen: issue_date },
    ValueTypeDef { label: "issuing_authority", keys: &["Issuing Authority", "Issued By", "Authority"], cue: "approved by", gen: issuing_authority },
    ValueTypeDef { label: "job_title", keys: &["Position", "Job Title", "Post"], cue: "employed as", gen: job_title },
    ValueTypeDef { label: "license_number", keys: &["License No", "Licence Number", "Permit No"], cue: "under permit", gen: license_number },
    ValueTypeDef { label: "nationality", keys: &["Nationality", "Citizenship"], cue: "citizen of", gen: nationality },
    ValueTypeDef { label: "person_name", keys: &["Name", "Full Name", "Holder", "Applicant"], cue: "certify that", gen: person_name },
    ValueTypeDef { label: "phone", keys: &["Phone", "Telephone", "Contact Number"], cue: "call", gen: phone },
    ValueTypeDef { label: "plate_number", keys: &["Plate No", "License Plate", "Vehicle Plate"], cue: "vehicle", gen: plate_number },
    ValueTypeDef { label: "postal_code", keys: &["Postcode", "Postal Code", "Zip"], cue: "postcode", gen: postal_code },
    ValueTypeDef { label: "product_name", keys: &["Goods", "Product", "Item Name"], cue: "supply of", gen: product_name },
    ValueTypeDef { label: "province", keys: &["Province", "Region"], cue: "located in", gen: province },
    ValueTypeDef { label: "quantity", keys: &["Quantity", "Qty", "Amount Ordered"], cue: "totalling", gen: quantity },
    ValueTypeDef { label: "registered_capital", keys: &["Registered Capital", "Capital"], cue: "capitalised at", gen: registered_capital },
    ValueTypeDef { label: "tax_amount", keys: &["Tax", "Tax Amount", "VAT"], cue: "tax of", gen: tax_amount },
    ValueTypeDef { label: "total_amount", keys: &["Total", "Total Amount", "Amount Due", "Grand Total"], cue: "sum of", gen: total_amount },
    ValueTypeDef { label: "unit_price", keys: &["Unit Price", "Price"], cue: "priced", gen: unit_price },
];

/// Labels of the shared value-type pool, sorted.
pub fn value_type_labels() -> Vec<&'static str> {
    VALUE_TYPES.iter().map(|t| t.label).collect()
}

pub(crate) fn value_type(label: &str) -> Option<&'static ValueTypeDef> {
    VALUE_TYPES.iter().find(|t| t.label == label)
}

pub(crate) fn split_words(s: &str) -> Vec<String> {
    words(s)
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
