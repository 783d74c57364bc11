use std::io::Write;

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::money::Money;

/// A year of activity, as in a cost comparison with and without free
/// reciprocal lending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioInputs {
    pub sent_requests: u64,
    pub lent_documents: u64,
    pub avg_fee_per_doc: Money,
    pub shipping_return_total: Money,
    pub shipping_out_total: Money,
    pub user_invoice_total: Money,
    pub fee_paid_to_nonreciprocal: Money,
    pub fee_received_from_nonreciprocal: Money,
}

impl ScenarioInputs {
    pub fn validate(&self) -> Result<(), LedgerError> {
        let amounts = [
            ("avg_fee_per_doc", self.avg_fee_per_doc),
            ("shipping_return_total", self.shipping_return_total),
            ("shipping_out_total", self.shipping_out_total),
            ("user_invoice_total", self.user_invoice_total),
            ("fee_paid_to_nonreciprocal", self.fee_paid_to_nonreciprocal),
            ("fee_received_from_nonreciprocal", self.fee_received_from_nonreciprocal),
        ];
        match amounts.iter().find(|(_, m)| m.is_negative()) {
            Some((name, m)) => Err(LedgerError::InvalidInputs(format!("{name} is negative ({m})"))),
            None => Ok(()),
        }
    }
}

/// One column of the comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSide {
    /// Fees paid for documents borrowed.
    pub fee_paid: Money,
    pub shipping_return: Money,
    pub shipping_out: Money,
    pub user_invoices: Money,
    /// Fees received for documents lent.
    pub fee_received: Money,
    pub costs: Money,
    pub revenues: Money,
    pub total: Money,
    pub avg_cost_per_doc: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub with_reciprocity: ScenarioSide,
    pub without_reciprocity: ScenarioSide,
}

fn side(inputs: &ScenarioInputs, fee_paid: Money, fee_received: Money, docs: u64) -> ScenarioSide {
    let costs = fee_paid + inputs.shipping_return_total + inputs.shipping_out_total;
    let revenues = inputs.user_invoice_total + fee_received;
    let total = costs - revenues;
    ScenarioSide {
        fee_paid,
        shipping_return: inputs.shipping_return_total,
        shipping_out: inputs.shipping_out_total,
        user_invoices: inputs.user_invoice_total,
        fee_received,
        costs,
        revenues,
        total,
        avg_cost_per_doc: total.div_round(docs).expect("docs checked non-zero"),
    }
}

/// Both scenarios. Without reciprocity every borrowed and every lent
/// document carries the average fee. Averages are over documents sent and
/// lent, rounded half-up to the cent.
pub fn compare_scenarios(inputs: &ScenarioInputs) -> Result<ScenarioReport, LedgerError> {
    inputs.validate()?;
    let docs = inputs.sent_requests.checked_add(inputs.lent_documents).filter(|d| *d > 0).ok_or(LedgerError::DivisionByZero)?;
    let fee = |n: u64| inputs.avg_fee_per_doc * i64::try_from(n).unwrap_or(i64::MAX);
    Ok(ScenarioReport {
        with_reciprocity: side(inputs, inputs.fee_paid_to_nonreciprocal, inputs.fee_received_from_nonreciprocal, docs),
        without_reciprocity: side(inputs, fee(inputs.sent_requests), fee(inputs.lent_documents), docs),
    })
}

impl ScenarioReport {
    /// Table rows: label, with reciprocity, without reciprocity.
    pub fn rows(&self) -> Vec<(String, Money, Money)> {
        let (w, o) = (&self.with_reciprocity, &self.without_reciprocity);
        vec![
            ("Costs".into(), w.costs, o.costs),
            ("Documents provided by other libraries".into(), w.fee_paid, o.fee_paid),
            ("Shipping back documents".into(), w.shipping_return, o.shipping_return),
            ("Shipping documents to borrowing libraries".into(), w.shipping_out, o.shipping_out),
            ("Revenues".into(), w.revenues, o.revenues),
            ("Invoices to users (copies of articles or documents from abroad)".into(), w.user_invoices, o.user_invoices),
            ("Documents sent to other libraries".into(), w.fee_received, o.fee_received),
            ("Total cost of service".into(), w.total, o.total),
            ("Average cost per document".into(), w.avg_cost_per_doc, o.avg_cost_per_doc),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "with_reciprocity", "without_reciprocity"])?;
        for (label, with, without) in self.rows() {
            w.write_record([label, with.to_string(), without.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_document_average_is_the_total() {
        let inputs = ScenarioInputs {
            sent_requests: 1,
            lent_documents: 0,
            avg_fee_per_doc: Money::ZERO,
            shipping_return_total: Money::ZERO,
            shipping_out_total: Money::ZERO,
            user_invoice_total: Money::ZERO,
            fee_paid_to_nonreciprocal: Money::from_euros(5),
            fee_received_from_nonreciprocal: Money::ZERO,
        };
        let r = compare_scenarios(&inputs).unwrap();
        assert_eq!(r.with_reciprocity.avg_cost_per_doc, r.with_reciprocity.total);
        let none = ScenarioInputs { sent_requests: 0, ..inputs };
        assert_eq!(compare_scenarios(&none), Err(LedgerError::DivisionByZero));
    }
}
