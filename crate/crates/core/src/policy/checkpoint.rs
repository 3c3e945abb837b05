//! Policy checkpoints: a versioned header, the network shape, then one line
//! per parameter group.
//!
//! ```text
//! aor-policy 1
//! kind recurrent
//! features both
//! shape 20 32 3 4          # input hidden layers outputs
//! group lstm0.weight 6656 0.01 ...
//! ...
//! end
//! ```

use super::{ActorPolicy, FeatureMap, QPolicy, RecurrentPolicy, TrainedPolicy, UniformPolicy};
use crate::error::{Error, Result};
use crate::nn::{LstmNet, LstmShape, Mlp, ParamGroup};
use crate::textio::{join, join_f64, parse_list, LineReader};
use std::io::Write;

pub const CHECKPOINT_MAGIC: &str = "aor-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_groups<W: Write>(out: &mut W, groups: &[ParamGroup], params: &[f64]) -> Result<()> {
    for g in groups {
        writeln!(
            out,
            "group {} {} {}",
            g.name,
            g.len,
            join_f64(&params[g.start..g.start + g.len])
        )?;
    }
    Ok(())
}

pub fn write_policy<W: Write>(policy: &TrainedPolicy, out: &mut W) -> Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    match policy {
        TrainedPolicy::Random(p) => {
            writeln!(out, "kind random")?;
            writeln!(out, "actions {}", p.num_actions)?;
        }
        TrainedPolicy::Q(p) => {
            writeln!(out, "kind q")?;
            writeln!(out, "features {}", p.features.name())?;
            writeln!(out, "temperature {:?}", p.temperature)?;
            writeln!(out, "sizes {}", join(p.net.sizes()))?;
            write_groups(out, &p.net.param_groups(), p.net.params())?;
        }
        TrainedPolicy::Actor(p) => {
            writeln!(out, "kind actor")?;
            writeln!(out, "features {}", p.features.name())?;
            writeln!(out, "sizes {}", join(p.net.sizes()))?;
            write_groups(out, &p.net.param_groups(), p.net.params())?;
        }
        TrainedPolicy::Recurrent(p) => {
            let s = p.net.shape();
            writeln!(out, "kind recurrent")?;
            writeln!(out, "features {}", p.features.name())?;
            writeln!(out, "shape {} {} {} {}", s.input, s.hidden, s.layers, s.outputs)?;
            write_groups(out, &p.net.param_groups(), p.net.params())?;
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

fn read_features(reader: &mut LineReader<'_>) -> Result<FeatureMap> {
    let name: String = reader.scalar("features")?;
    FeatureMap::from_name(&name).ok_or_else(|| Error::Parse {
        line: reader.line_of_previous(),
        message: format!("unknown features '{name}'"),
    })
}

/// Reads groups in the order `expected` lists them into one flat vector.
fn read_groups(reader: &mut LineReader<'_>, expected: &[ParamGroup], total: usize) -> Result<Vec<f64>> {
    let mut params = Vec::with_capacity(total);
    for g in expected {
        let tokens = reader.record("group")?;
        let line = reader.line_of_previous();
        if tokens.len() < 2 || tokens[0] != g.name {
            return Err(Error::Parse {
                line,
                message: format!("expected group {}", g.name),
            });
        }
        let len: usize = crate::textio::parse_token(tokens[1], line)?;
        if len != g.len {
            return Err(Error::Parse {
                line,
                message: format!("group {} has {len} values, expected {}", g.name, g.len),
            });
        }
        params.extend(parse_list::<f64>(&tokens[2..], Some(len), line)?);
    }
    Ok(params)
}

pub fn read_policy(text: &str) -> Result<TrainedPolicy> {
    let mut reader = LineReader::new(text);
    reader.header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let kind: String = reader.scalar("kind")?;
    let bad_shape = |line: usize| Error::Parse {
        line,
        message: "invalid network shape".into(),
    };
    let policy = match kind.as_str() {
        "random" => TrainedPolicy::Random(UniformPolicy {
            num_actions: reader.scalar("actions")?,
        }),
        "q" | "actor" => {
            let features = read_features(&mut reader)?;
            let temperature = if kind == "q" {
                Some(reader.scalar::<f64>("temperature")?)
            } else {
                None
            };
            let sizes: Vec<usize> = reader.list("sizes", None)?;
            if sizes.len() < 2 || sizes.contains(&0) {
                return Err(bad_shape(reader.line_of_previous()));
            }
            let template = Mlp::from_params(&sizes, vec![0.0; Mlp::param_count(&sizes)]).expect("count matches");
            let params = read_groups(&mut reader, &template.param_groups(), template.num_params())?;
            let net = Mlp::from_params(&sizes, params).expect("groups cover the layout");
            match temperature {
                Some(temperature) => TrainedPolicy::Q(QPolicy {
                    net,
                    features,
                    temperature,
                }),
                None => TrainedPolicy::Actor(ActorPolicy { net, features }),
            }
        }
        "recurrent" => {
            let features = read_features(&mut reader)?;
            let dims: Vec<usize> = reader.list("shape", Some(4))?;
            if dims.contains(&0) {
                return Err(bad_shape(reader.line_of_previous()));
            }
            let shape = LstmShape {
                input: dims[0],
                hidden: dims[1],
                layers: dims[2],
                outputs: dims[3],
            };
            let count = LstmNet::param_count(shape);
            let template = LstmNet::from_params(shape, vec![0.0; count]).expect("count matches");
            let params = read_groups(&mut reader, &template.param_groups(), count)?;
            let net = LstmNet::from_params(shape, params).expect("groups cover the layout");
            TrainedPolicy::Recurrent(RecurrentPolicy::new(net, features))
        }
        other => {
            return Err(Error::Parse {
                line: reader.line_of_previous(),
                message: format!("unknown policy kind '{other}'"),
            })
        }
    };
    reader.finish()?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn round_trip(p: &TrainedPolicy) -> TrainedPolicy {
        let mut buf = Vec::new();
        write_policy(p, &mut buf).unwrap();
        read_policy(std::str::from_utf8(&buf).unwrap()).unwrap()
    }

    #[test]
    fn every_kind_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Mlp::new(&[6, 5, 4], &mut rng);
        let lstm = LstmNet::new(
            LstmShape {
                input: 6,
                hidden: 3,
                layers: 2,
                outputs: 4,
            },
            &mut rng,
        );
        let policies = [
            TrainedPolicy::Random(UniformPolicy { num_actions: 4 }),
            TrainedPolicy::Q(QPolicy {
                net: q.clone(),
                features: FeatureMap::Sorted,
                temperature: 0.1,
            }),
            TrainedPolicy::Actor(ActorPolicy {
                net: q,
                features: FeatureMap::Raw,
            }),
            TrainedPolicy::Recurrent(RecurrentPolicy::new(lstm, FeatureMap::Both)),
        ];
        for p in &policies {
            let back = round_trip(p);
            let mut a = Vec::new();
            let mut b = Vec::new();
            write_policy(p, &mut a).unwrap();
            write_policy(&back, &mut b).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn damaged_checkpoints_are_rejected() {
        let p = TrainedPolicy::Q(QPolicy {
            net: Mlp::new(&[2, 2], &mut ChaCha8Rng::seed_from_u64(2)),
            features: FeatureMap::Raw,
            temperature: 1.0,
        });
        let mut buf = Vec::new();
        write_policy(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_policy(&truncated), Err(Error::Parse { .. })));
        assert!(matches!(
            read_policy(&text.replace("aor-policy 1", "aor-policy 2")),
            Err(Error::VersionMismatch { .. })
        ));
    }
}
