//! Database records and the sealed request/reply bodies exchanged with the
//! database server. A record holds a node's full ledger (from which its
//! reputation is computed) and its authority of record.

use reputation_core::{global_reputation, GlobalReputation, Rational, ScoreLedger, ServerId};

use crate::wire::{FieldReader, FieldWriter, WireError};

/// One node's row in the database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbRecord {
    pub node: ServerId,
    pub ledger: ScoreLedger,
    pub authority: ServerId,
}

impl DbRecord {
    pub fn reputation(&self) -> GlobalReputation {
        global_reputation(&self.ledger)
    }

    pub fn encode(&self) -> Vec<u8> {
        FieldWriter::default()
            .server_id(&self.node)
            .u64(self.ledger.transactions())
            .rational(self.ledger.pos_accum())
            .rational(self.ledger.neg_accum())
            .server_id(&self.authority)
            .finish()
    }

    pub fn decode_from(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        let node = r.server_id()?;
        let transactions = r.u64()?;
        let pos: Rational = r.rational()?;
        let neg: Rational = r.rational()?;
        let authority = r.server_id()?;
        let ledger = ScoreLedger::from_parts(node.clone(), transactions, pos, neg)
            .map_err(|_| WireError::BadRational)?;
        Ok(DbRecord {
            node,
            ledger,
            authority,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::new(bytes);
        let record = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(record)
    }
}

/// Sealed database operations an authority can request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DbOp {
    /// Insert or replace one record.
    WriteRecord(DbRecord),
    /// Read every record of the requesting authority's subtree.
    ReadSubtree,
    /// Remove a node's record (revocation).
    Remove(ServerId),
}

const OP_WRITE: u8 = 1;
const OP_READ_SUBTREE: u8 = 2;
const OP_REMOVE: u8 = 3;

impl DbOp {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            DbOp::WriteRecord(record) => FieldWriter::default()
                .field(&[OP_WRITE])
                .field(&record.encode())
                .finish(),
            DbOp::ReadSubtree => FieldWriter::default().field(&[OP_READ_SUBTREE]).finish(),
            DbOp::Remove(node) => FieldWriter::default()
                .field(&[OP_REMOVE])
                .server_id(node)
                .finish(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::new(bytes);
        let op = r.field()?;
        let result = match op {
            [OP_WRITE] => {
                let body = r.field()?;
                DbOp::WriteRecord(DbRecord::decode(body)?)
            }
            [OP_READ_SUBTREE] => DbOp::ReadSubtree,
            [OP_REMOVE] => DbOp::Remove(r.server_id()?),
            _ => return Err(WireError::BadFieldLength),
        };
        r.finish()?;
        Ok(result)
    }
}

/// Sealed reply to a subtree read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbReply {
    pub records: Vec<DbRecord>,
}

impl DbReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = FieldWriter::default();
        for record in &self.records {
            w = w.field(&record.encode());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::new(bytes);
        let mut records = Vec::new();
        while let Ok(body) = r.field() {
            records.push(DbRecord::decode(body)?);
        }
        Ok(DbReply { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use reputation_core::{apply_feedback, new_ledger, LocalScore, WeightMode};

    fn sample_record() -> DbRecord {
        let ledger = new_ledger(ServerId::new("s1"));
        let ledger = apply_feedback(
            &ledger,
            LocalScore::Positive,
            &GlobalReputation::from_integer(5),
            WeightMode::ReputationWeighted,
        );
        DbRecord {
            node: ServerId::new("s1"),
            ledger,
            authority: ServerId::new("a1"),
        }
    }

    #[test]
    fn record_round_trip() {
        let record = sample_record();
        assert_eq!(DbRecord::decode(&record.encode()).unwrap(), record);
    }

    #[test]
    fn ops_round_trip() {
        for op in [
            DbOp::WriteRecord(sample_record()),
            DbOp::ReadSubtree,
            DbOp::Remove(ServerId::new("s1")),
        ] {
            assert_eq!(DbOp::decode(&op.encode()).unwrap(), op);
        }
    }

    #[test]
    fn reply_round_trip() {
        let reply = DbReply {
            records: vec![sample_record(), sample_record()],
        };
        assert_eq!(DbReply::decode(&reply.encode()).unwrap(), reply);
    }
}
