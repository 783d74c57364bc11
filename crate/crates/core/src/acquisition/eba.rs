use std::cmp::Reverse;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::AcquisitionError;
use crate::money::Money;

/// Twelve months of title-level usage for one title of an evidence-based
/// programme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EbaUsageRow {
    pub key: String,
    pub subject: String,
    pub yop: i32,
    pub list_price: Money,
    /// Unique title requests per month.
    pub monthly_uses: [u32; 12],
    /// Access denials per month.
    pub monthly_denials: [u32; 12],
    pub in_program: bool,
    /// Picked by the subject librarian.
    pub prepicked: bool,
}

impl EbaUsageRow {
    pub fn total_uses(&self) -> u64 {
        self.monthly_uses.iter().map(|&u| u64::from(u)).sum()
    }

    pub fn total_denials(&self) -> u64 {
        self.monthly_denials.iter().map(|&u| u64::from(u)).sum()
    }
}

/// Number of months with at least one use.
pub fn month_spread(row: &EbaUsageRow) -> usize {
    row.monthly_uses.iter().filter(|&&u| u > 0).count()
}

/// Picks titles in priority order while the budget lasts: prepicked first,
/// then total uses, month spread, denials and recency (all descending),
/// then key. A title too expensive for the remaining budget is skipped and
/// cheaper ones below it may still be taken. Only in-programme titles are
/// considered.
pub fn eba_select(rows: &[EbaUsageRow], budget: Money) -> Vec<String> {
    let mut ranked: Vec<&EbaUsageRow> = rows.iter().filter(|r| r.in_program).collect();
    ranked.sort_by_key(|r| {
        (Reverse(r.prepicked), Reverse(r.total_uses()), Reverse(month_spread(r)), Reverse(r.total_denials()), Reverse(r.yop), r.key.clone())
    });
    let mut remaining = budget;
    let mut picked = Vec::new();
    for row in ranked {
        if remaining >= row.list_price {
            remaining -= row.list_price;
            picked.push(row.key.clone());
        }
    }
    picked
}

fn parse_flag(value: &str) -> Result<bool, AcquisitionError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" | "" => Ok(false),
        other => Err(AcquisitionError::Usage(format!("not a boolean: {other:?}"))),
    }
}

/// Reads `key,subject,yop,price,uses_m1..uses_m12,denials_m1..denials_m12,in_program,prepicked`.
pub fn read_usage_csv<R: Read>(reader: R) -> Result<Vec<EbaUsageRow>, AcquisitionError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| AcquisitionError::Usage(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| AcquisitionError::Usage(format!("missing column {name}")))
    };
    let (key, subject, yop, price) = (col("key")?, col("subject")?, col("yop")?, col("price")?);
    let uses: Vec<usize> = (1..=12).map(|m| col(&format!("uses_m{m}"))).collect::<Result<_, _>>()?;
    let denials: Vec<usize> = (1..=12).map(|m| col(&format!("denials_m{m}"))).collect::<Result<_, _>>()?;
    let (in_program, prepicked) = (col("in_program")?, col("prepicked")?);

    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| AcquisitionError::Usage(e.to_string()))?;
        let at = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| AcquisitionError::Usage(format!("row {}: bad {what}", line + 2));
        let count = |i: usize, what: &str| at(i).parse::<u32>().map_err(|_| bad(what));
        let mut monthly_uses = [0; 12];
        let mut monthly_denials = [0; 12];
        for m in 0..12 {
            monthly_uses[m] = count(uses[m], "use count")?;
            monthly_denials[m] = count(denials[m], "denial count")?;
        }
        rows.push(EbaUsageRow {
            key: at(key).to_string(),
            subject: at(subject).to_string(),
            yop: at(yop).parse().map_err(|_| bad("yop"))?,
            list_price: Money::parse(at(price)).ok_or_else(|| bad("price"))?,
            monthly_uses,
            monthly_denials,
            in_program: parse_flag(at(in_program))?,
            prepicked: parse_flag(at(prepicked))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(key: &str, uses: u32, price: i64) -> EbaUsageRow {
        let mut monthly_uses = [0; 12];
        monthly_uses[0] = uses;
        EbaUsageRow {
            key: key.into(),
            subject: "chem".into(),
            yop: 2020,
            list_price: Money::from_euros(price),
            monthly_uses,
            monthly_denials: [0; 12],
            in_program: true,
            prepicked: false,
        }
    }

    #[test]
    fn ordering_and_budget() {
        assert!(eba_select(&[row("a", 5, 10)], Money::ZERO).is_empty());
        let rows = [row("low", 3, 10), row("high", 5, 10)];
        assert_eq!(eba_select(&rows, Money::from_euros(10)), vec!["high"]);
        let mut spread = row("spread", 5, 10);
        spread.monthly_uses = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        assert_eq!(eba_select(&[row("burst", 5, 10), spread], Money::from_euros(10)), vec!["spread"]);
        let mut pick = row("pick", 0, 10);
        pick.prepicked = true;
        assert_eq!(eba_select(&[row("busy", 50, 10), pick], Money::from_euros(10)), vec!["pick"]);
    }

    #[test]
    fn csv_ingestion() {
        let mut header = vec!["key", "subject", "yop", "price"].into_iter().map(String::from).collect::<Vec<_>>();
        header.extend((1..=12).map(|m| format!("uses_m{m}")));
        header.extend((1..=12).map(|m| format!("denials_m{m}")));
        header.extend(["in_program".to_string(), "prepicked".to_string()]);
        let mut line = vec!["t1".to_string(), "chem".into(), "2021".into(), "45.50".into()];
        line.extend((1..=12).map(|m| (m % 3).to_string()));
        line.extend((1..=12).map(|_| "0".to_string()));
        line.extend(["true".to_string(), "no".to_string()]);
        let text = format!("{}\n{}\n", header.join(","), line.join(","));
        let rows = read_usage_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].list_price, Money::parse("45.50").unwrap());
        assert_eq!(rows[0].total_uses(), 12);
        assert_eq!(month_spread(&rows[0]), 8);
    }
}
