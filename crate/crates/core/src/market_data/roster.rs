use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetClass {
    Stock,
    IndexEtf,
    Forex,
    Crypto,
}

impl AssetClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AssetClass::Stock => "stock",
            AssetClass::IndexEtf => "index_etf",
            AssetClass::Forex => "forex",
            AssetClass::Crypto => "crypto",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AssetClass::Stock => "Stock",
            AssetClass::IndexEtf => "Index ETF",
            AssetClass::Forex => "Forex",
            AssetClass::Crypto => "Cryptocurrency",
        }
    }
}

impl fmt::Display for AssetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssetClass {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stock" => Ok(AssetClass::Stock),
            "index_etf" => Ok(AssetClass::IndexEtf),
            "forex" => Ok(AssetClass::Forex),
            "crypto" => Ok(AssetClass::Crypto),
            other => Err(DataError::Config(format!("unknown asset class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub ticker: String,
    pub asset_class: AssetClass,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub name: String,
}

impl RosterEntry {
    /// Symbol understood by the chart API (`EURUSD=X`, `BTC-USD`, ...).
    pub fn chart_symbol(&self) -> String {
        match self.asset_class {
            AssetClass::Forex => format!("{}=X", self.ticker),
            AssetClass::Crypto => match self.ticker.strip_suffix("USD") {
                Some(base) => format!("{base}-USD"),
                None => self.ticker.clone(),
            },
            _ => self.ticker.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssetRoster {
    pub entries: Vec<RosterEntry>,
}

pub const ROSTER_HEADER: &str = "ticker,asset_class,start,end,name";

impl AssetRoster {
    pub fn new(entries: Vec<RosterEntry>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.ticker.as_str()) {
                return Err(DataError::Config(format!("duplicate ticker {}", e.ticker)));
            }
            if e.start >= e.end {
                return Err(DataError::Config(format!("{}: start {} is not before end {}", e.ticker, e.start, e.end)));
            }
        }
        Ok(Self { entries })
    }

    /// Parses `ticker,asset_class,start,end,name`; the name may contain commas.
    pub fn from_csv(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("").trim();
        if header != ROSTER_HEADER {
            return Err(DataError::Format { offset: 0, message: format!("roster header must be `{ROSTER_HEADER}`") });
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| DataError::Validation { line: Some(i + 2), message: m.to_string() };
            let mut parts = line.splitn(5, ',');
            let mut next = |what: &str| parts.next().map(str::trim).ok_or_else(|| bad(&format!("missing {what}")));
            let ticker = next("ticker")?.to_string();
            let asset_class = next("asset_class")?.parse()?;
            let start = NaiveDate::parse_from_str(next("start")?, "%Y-%m-%d").map_err(|_| bad("bad start date"))?;
            let end = NaiveDate::parse_from_str(next("end")?, "%Y-%m-%d").map_err(|_| bad("bad end date"))?;
            let name = next("name")?.to_string();
            entries.push(RosterEntry { ticker, asset_class, start, end, name });
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{ROSTER_HEADER}\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{},{}\n", e.ticker, e.asset_class, e.start, e.end, e.name));
        }
        out
    }

    pub fn get(&self, ticker: &str) -> Option<&RosterEntry> {
        self.entries.iter().find(|e| e.ticker == ticker)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The forty assets studied: ten stocks, ten index ETFs, ten currency
    /// pairs and ten cryptocurrencies, each over whole calendar years.
    pub fn studied_assets() -> Self {
        use AssetClass::*;
        const ROWS: &[(&str, AssetClass, i32, &str)] = &[
            ("AAPL", Stock, 2010, "Apple Inc."),
            ("GOOGL", Stock, 2010, "Alphabet Inc."),
            ("MSFT", Stock, 2010, "Microsoft Corporation"),
            ("AMZN", Stock, 2010, "Amazon.com, Inc."),
            ("TSLA", Stock, 2010, "Tesla, Inc."),
            ("BRK-B", Stock, 2010, "Berkshire Hathaway Inc."),
            ("NVDA", Stock, 2010, "NVIDIA Corporation"),
            ("META", Stock, 2012, "Meta Platforms, Inc."),
            ("V", Stock, 2010, "Visa Inc."),
            ("JNJ", Stock, 2010, "Johnson & Johnson"),
            ("SPY", IndexEtf, 2010, "SPDR S&P 500 ETF Trust"),
            ("QQQ", IndexEtf, 2010, "Invesco QQQ Trust"),
            ("VTI", IndexEtf, 2010, "Vanguard Total Stock Market Index Fund ETF Shares"),
            ("EEM", IndexEtf, 2010, "iShares MSCI Emerging Markets ETF"),
            ("EFA", IndexEtf, 2010, "iShares MSCI EAFE ETF"),
            ("VWO", IndexEtf, 2010, "Vanguard Emerging Markets Stock Index Fund"),
            ("IWM", IndexEtf, 2010, "iShares Russell 2000 ETF"),
            ("GLD", IndexEtf, 2010, "SPDR Gold Shares"),
            ("GOVT", IndexEtf, 2012, "iShares US Treasury Bond ETF"),
            ("SCHD", IndexEtf, 2011, "Schwab U.S. Dividend Equity ETF"),
            ("EURUSD", Forex, 2010, "EUR/USD"),
            ("USDJPY", Forex, 2010, "USD/JPY"),
            ("GBPUSD", Forex, 2010, "GBP/USD"),
            ("AUDUSD", Forex, 2010, "AUD/USD"),
            ("USDCAD", Forex, 2010, "USD/CAD"),
            ("USDCHF", Forex, 2010, "USD/CHF"),
            ("EURGBP", Forex, 2010, "EUR/GBP"),
            ("EURJPY", Forex, 2010, "EUR/JPY"),
            ("GBPJPY", Forex, 2010, "GBP/JPY"),
            ("AUDJPY", Forex, 2010, "AUD/JPY"),
            ("BTCUSD", Crypto, 2014, "Bitcoin/USD"),
            ("ETHUSD", Crypto, 2017, "Ethereum/USD"),
            ("LTCUSD", Crypto, 2014, "Litecoin/USD"),
            ("BCHUSD", Crypto, 2017, "Bitcoin Cash/USD"),
            ("DOGEUSD", Crypto, 2017, "Dogecoin/USD"),
            ("XRPUSD", Crypto, 2017, "XRP/USD"),
            ("ADAUSD", Crypto, 2017, "Cardano/USD"),
            ("DOTUSD", Crypto, 2020, "Polkadot/USD"),
            ("BNBUSD", Crypto, 2017, "BNB/USD"),
            ("SOLUSD", Crypto, 2020, "Solana/USD"),
        ];
        let entries = ROWS
            .iter()
            .map(|&(ticker, asset_class, from, name)| RosterEntry {
                ticker: ticker.to_string(),
                asset_class,
                start: NaiveDate::from_ymd_opt(from, 1, 1).unwrap(),
                end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
                name: name.to_string(),
            })
            .collect();
        Self::new(entries).expect("built-in roster is valid")
    }
}
