//! Line-delimited text encoding of the collector protocol.
//!
//! A stream opens with the version line `UAP/1`. Each following line is
//! one message: a verb, a space, and a JSON payload. Requests are `ADD`,
//! `DEL` (payload: an example) and `EVAL` (payload: an instance). Replies
//! are `ACK`, `REFUSED <reason>` and `PRED <prediction>`.

use std::io::{BufRead, Write};

use super::{DataCollector, ProtocolMessage, RefusalReason, Response};
use crate::error::{AuditError, Result};

pub const PROTOCOL_VERSION: &str = "UAP/1";

fn payload<T: serde::de::DeserializeOwned>(verb: &str, rest: Option<&str>) -> Result<T> {
    let rest = rest.ok_or_else(|| AuditError::Protocol(format!("{verb} needs a payload")))?;
    serde_json::from_str(rest).map_err(|e| AuditError::Protocol(format!("bad {verb} payload: {e}")))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("protocol payloads always serialize")
}

pub fn encode_message(msg: &ProtocolMessage) -> String {
    let body = match msg {
        ProtocolMessage::Add(e) | ProtocolMessage::Del(e) => json(e),
        ProtocolMessage::Eval(x) => json(x),
    };
    format!("{} {body}", msg.verb())
}

pub fn decode_message(line: &str) -> Result<ProtocolMessage> {
    let line = line.trim_end_matches(['\r', '\n']);
    let (verb, rest) = match line.split_once(' ') {
        Some((v, r)) => (v, Some(r)),
        None => (line, None),
    };
    match verb {
        "ADD" => Ok(ProtocolMessage::Add(payload(verb, rest)?)),
        "DEL" => Ok(ProtocolMessage::Del(payload(verb, rest)?)),
        "EVAL" => Ok(ProtocolMessage::Eval(payload(verb, rest)?)),
        other => Err(AuditError::Protocol(format!("unknown verb `{other}`"))),
    }
}

pub fn encode_response(r: &Response) -> String {
    match r {
        Response::Ack => "ACK".into(),
        Response::Refused(reason) => format!("REFUSED {}", reason.code()),
        Response::Prediction(p) => format!("PRED {}", json(p)),
    }
}

pub fn decode_response(line: &str) -> Result<Response> {
    let line = line.trim_end_matches(['\r', '\n']);
    let (verb, rest) = match line.split_once(' ') {
        Some((v, r)) => (v, Some(r)),
        None => (line, None),
    };
    match verb {
        "ACK" if rest.is_none() => Ok(Response::Ack),
        "REFUSED" => {
            let code = rest.unwrap_or_default();
            RefusalReason::from_code(code)
                .map(Response::Refused)
                .ok_or_else(|| AuditError::Protocol(format!("unknown refusal reason `{code}`")))
        }
        "PRED" => Ok(Response::Prediction(payload(verb, rest)?)),
        other => Err(AuditError::Protocol(format!("unexpected reply `{other}`"))),
    }
}

fn read_line(reader: &mut impl BufRead) -> Result<Option<String>> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line))
}

/// Answers requests from `reader` until end of stream. Returns the number
/// of messages handled.
pub fn serve(mut reader: impl BufRead, mut writer: impl Write, collector: &mut dyn DataCollector) -> Result<u64> {
    match read_line(&mut reader)? {
        Some(v) if v.trim_end() == PROTOCOL_VERSION => {}
        Some(v) => return Err(AuditError::Protocol(format!("unsupported version line `{}`", v.trim_end()))),
        None => return Ok(0),
    }
    writeln!(writer, "{PROTOCOL_VERSION}")?;
    writer.flush()?;
    let mut handled = 0;
    while let Some(line) = read_line(&mut reader)? {
        if line.trim().is_empty() {
            continue;
        }
        let reply = collector.handle(&decode_message(&line)?)?;
        writeln!(writer, "{}", encode_response(&reply))?;
        writer.flush()?;
        handled += 1;
    }
    Ok(handled)
}

/// A collector on the far side of a byte stream.
pub struct RemoteDatCol<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> RemoteDatCol<R, W> {
    /// Sends the version line and waits for the server to echo it.
    pub fn connect(mut reader: R, mut writer: W) -> Result<Self> {
        writeln!(writer, "{PROTOCOL_VERSION}")?;
        writer.flush()?;
        match read_line(&mut reader)? {
            Some(v) if v.trim_end() == PROTOCOL_VERSION => Ok(RemoteDatCol { reader, writer }),
            other => Err(AuditError::Protocol(format!("server answered the handshake with {other:?}"))),
        }
    }
}

impl<R: BufRead, W: Write> DataCollector for RemoteDatCol<R, W> {
    fn handle(&mut self, msg: &ProtocolMessage) -> Result<Response> {
        writeln!(self.writer, "{}", encode_message(msg))?;
        self.writer.flush()?;
        let line = read_line(&mut self.reader)?.ok_or_else(|| AuditError::Protocol("stream closed".into()))?;
        decode_response(&line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::{Behaviour, DatCol};
    use crate::learners::LearnerSpec;
    use crate::types::{BitVector, Example, Instance, Label, Prediction};
    use std::io::{BufReader, Cursor};
    use std::os::unix::net::UnixStream;

    fn samples() -> Vec<ProtocolMessage> {
        vec![
            ProtocolMessage::Add(Example::new(Instance::Dense(vec![0.1, -2.5e-17, 1.0 / 3.0]), Label::Real(-0.7))),
            ProtocolMessage::Del(Example::new(Instance::Binary(BitVector::from_u64(0b1011, 5)), Label::Class(3))),
            ProtocolMessage::Eval(Instance::Sentence(vec![0, 4, 9, 1])),
        ]
    }

    #[test]
    fn messages_round_trip() {
        for m in samples() {
            let line = encode_message(&m);
            assert!(!line.contains('\n'));
            assert_eq!(decode_message(&line).unwrap(), m);
        }
    }

    #[test]
    fn responses_round_trip() {
        for r in [
            Response::Ack,
            Response::Refused(RefusalReason::BudgetExhausted),
            Response::Prediction(Prediction::ClassDistribution(vec![0.1, 0.2, 0.7])),
            Response::Prediction(Prediction::RealValue(std::f64::consts::PI)),
        ] {
            assert_eq!(decode_response(&encode_response(&r)).unwrap(), r);
        }
    }

    #[test]
    fn malformed_lines_are_protocol_errors() {
        for bad in ["", "PUT {}", "ADD", "EVAL {not json", "REFUSED nope"] {
            let m = decode_message(bad).is_err();
            let r = decode_response(bad).is_err();
            assert!(m && r, "{bad}");
        }
    }

    #[test]
    fn serve_answers_a_scripted_session() {
        let mut dc = DatCol::new(LearnerSpec::Ols, 2, 1, 3, Behaviour::Honest).unwrap();
        let ex = |v: f64| Example::new(Instance::Dense(vec![v]), Label::Real(2.0 * v));
        let script = [
            ProtocolMessage::Eval(Instance::Dense(vec![1.0])),
            ProtocolMessage::Add(ex(1.0)),
            ProtocolMessage::Add(ex(2.0)),
            ProtocolMessage::Eval(Instance::Dense(vec![3.0])),
        ];
        let mut input = format!("{PROTOCOL_VERSION}\n");
        for m in &script {
            input.push_str(&encode_message(m));
            input.push('\n');
        }
        let mut out = Vec::new();
        assert_eq!(serve(Cursor::new(input), &mut out, &mut dc).unwrap(), 4);
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines[..4], [PROTOCOL_VERSION, "REFUSED still_collecting", "ACK", "ACK"]);
        let Response::Prediction(Prediction::RealValue(v)) = decode_response(lines[4]).unwrap() else {
            panic!("expected a prediction")
        };
        assert!((v - 6.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut dc = DatCol::new(LearnerSpec::Ols, 2, 1, 3, Behaviour::Honest).unwrap();
        assert!(serve(Cursor::new("UAP/0\n"), Vec::new(), &mut dc).is_err());
    }

    #[test]
    fn remote_collector_over_a_socket_matches_local() {
        let (a, b) = UnixStream::pair().unwrap();
        let server = std::thread::spawn(move || {
            let mut dc = DatCol::new(LearnerSpec::Ols, 3, 1, 8, Behaviour::Honest).unwrap();
            serve(BufReader::new(b.try_clone().unwrap()), b, &mut dc).unwrap()
        });
        let mut remote = RemoteDatCol::connect(BufReader::new(a.try_clone().unwrap()), a).unwrap();
        let mut local = DatCol::new(LearnerSpec::Ols, 3, 1, 8, Behaviour::Honest).unwrap();
        let ex = |v: f64| Example::new(Instance::Dense(vec![v, v * v]), Label::Real(v.sin()));
        let mut script: Vec<ProtocolMessage> = (0..3).map(|i| ProtocolMessage::Add(ex(i as f64 * 0.4))).collect();
        script.push(ProtocolMessage::Eval(Instance::Dense(vec![0.3, 0.09])));
        script.push(ProtocolMessage::Del(ex(0.4)));
        script.push(ProtocolMessage::Eval(Instance::Dense(vec![0.3, 0.09])));
        script.push(ProtocolMessage::Del(ex(0.0)));
        for m in &script {
            assert_eq!(remote.handle(m).unwrap(), local.handle(m).unwrap());
        }
        drop(remote);
        assert_eq!(server.join().unwrap(), script.len() as u64);
    }
}
