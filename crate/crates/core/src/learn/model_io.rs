//! Text container for trained classifiers.
//!
//! ```text
//! phyaug-model 1
//! kind mlp|svm
//! classes <N>
//! mean <d values>
//! std <d values>
//! # mlp
//! layers <L>
//! layer <inputs> <outputs>
//! bias <outputs values>
//! <outputs lines of `inputs` weights>
//! # svm
//! svm <C> <gamma> <ovr|ovo>
//! labels <k> <labels...>
//! support <n_sv>
//! <n_sv lines: origin v1 .. vd>
//! machines <count>
//! machine <positive> <negative|-> <rho> <n>
//! <line of `slot:coef` pairs>
//! end
//! ```
//!
//! Floats are written in shortest round-trip form so a reload predicts
//! identically.

use std::fmt::Display;
use std::io::{BufRead, Lines, Write};

use crate::error::{Error, Result};
use crate::learn::{BinaryMachine, Classifier, Dense, MlpModel, Network, Normalizer, SvmModel};
use crate::scalar::Real;

const MAGIC: &str = "phyaug-model 1";

fn join<V: Display>(values: &[V]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

pub(crate) fn write_classifier<T: Real, W: Write>(model: &Classifier<T>, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "kind {}", model.kind())?;
    let (normalizer, classes) = match model {
        Classifier::Mlp(m) => (&m.normalizer, m.class_count()),
        Classifier::Svm(m) => (&m.normalizer, m.class_count),
    };
    writeln!(out, "classes {classes}")?;
    writeln!(out, "mean {}", join(&normalizer.mean))?;
    writeln!(out, "std {}", join(&normalizer.std))?;
    match model {
        Classifier::Mlp(m) => {
            writeln!(out, "layers {}", m.network.layers.len())?;
            for layer in &m.network.layers {
                writeln!(out, "layer {} {}", layer.inputs, layer.outputs)?;
                writeln!(out, "bias {}", join(&layer.bias))?;
                for row in layer.weights.chunks(layer.inputs) {
                    writeln!(out, "{}", join(row))?;
                }
            }
        }
        Classifier::Svm(m) => {
            writeln!(out, "svm {} {} {}", m.c, m.gamma, m.scheme.as_str())?;
            writeln!(out, "labels {} {}", m.classes.len(), join(&m.classes))?;
            let d = m.feature_dim();
            writeln!(out, "support {}", m.support_origin.len())?;
            for (k, origin) in m.support_origin.iter().enumerate() {
                writeln!(out, "{origin} {}", join(&m.support_vectors[k * d..(k + 1) * d]))?;
            }
            writeln!(out, "machines {}", m.machines.len())?;
            for mach in &m.machines {
                let neg = mach.negative.map_or("-".to_string(), |n| n.to_string());
                writeln!(out, "machine {} {neg} {} {}", mach.positive, mach.rho, mach.support.len())?;
                let pairs: Vec<String> = mach.support.iter().zip(&mach.coef).map(|(s, c)| format!("{s}:{c}")).collect();
                writeln!(out, "{}", pairs.join(" "))?;
            }
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

struct Reader<B> {
    lines: Lines<B>,
    line_no: usize,
}

impl<B: BufRead> Reader<B> {
    fn next_line(&mut self) -> Result<String> {
        self.line_no += 1;
        match self.lines.next() {
            Some(line) => Ok(line?),
            None => Err(Error::Format(format!("unexpected end of model file at line {}", self.line_no))),
        }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(Error::Format(format!("line {}: expected `{key}`", self.line_no)));
        }
        Ok(toks.map(str::to_string).collect())
    }

    fn err(&self, what: &str) -> Error {
        Error::Format(format!("line {}: {what}", self.line_no))
    }
}

fn parse<V: std::str::FromStr>(tok: &str, r: &Reader<impl BufRead>) -> Result<V> {
    tok.parse().map_err(|_| r.err(&format!("cannot parse {tok:?}")))
}

fn parse_all<V: std::str::FromStr>(toks: &[String], r: &Reader<impl BufRead>) -> Result<Vec<V>> {
    toks.iter().map(|t| parse(t, r)).collect()
}

pub(crate) fn read_classifier<T: Real, B: BufRead>(input: B) -> Result<Classifier<T>> {
    let mut r = Reader { lines: input.lines(), line_no: 0 };
    if r.next_line()?.trim() != MAGIC {
        return Err(Error::Format("missing model header".into()));
    }
    let kind = r.keyed("kind")?;
    let classes: usize = parse(r.keyed("classes")?.first().ok_or_else(|| r.err("missing count"))?, &r)?;
    let mean: Vec<T> = parse_all(&r.keyed("mean")?, &r)?;
    let std: Vec<T> = parse_all(&r.keyed("std")?, &r)?;
    if mean.len() != std.len() {
        return Err(r.err("normalizer dimensions differ"));
    }
    let normalizer = Normalizer { mean, std };
    let model = match kind.first().map(String::as_str) {
        Some("mlp") => {
            let count: usize = parse(&r.keyed("layers")?[0], &r)?;
            let mut layers = Vec::with_capacity(count);
            for _ in 0..count {
                let dims: Vec<usize> = parse_all(&r.keyed("layer")?, &r)?;
                let [inputs, outputs] = dims[..] else { return Err(r.err("layer needs two sizes")) };
                let bias: Vec<T> = parse_all(&r.keyed("bias")?, &r)?;
                if bias.len() != outputs {
                    return Err(r.err("bias length"));
                }
                let mut weights = Vec::with_capacity(inputs * outputs);
                for _ in 0..outputs {
                    let line = r.next_line()?;
                    let row: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                    if row.len() != inputs {
                        return Err(r.err("weight row length"));
                    }
                    weights.extend(parse_all::<T>(&row, &r)?);
                }
                layers.push(Dense { inputs, outputs, weights, bias });
            }
            let network = Network { layers };
            if network.layers.is_empty()
                || network.input_dim() != normalizer.dim()
                || network.output_dim() != classes
                || network.layers.windows(2).any(|w| w[0].outputs != w[1].inputs)
            {
                return Err(Error::Format("inconsistent layer shapes".into()));
            }
            Classifier::Mlp(MlpModel { normalizer, network })
        }
        Some("svm") => {
            let p = r.keyed("svm")?;
            if p.len() != 3 {
                return Err(r.err("svm needs C, gamma and scheme"));
            }
            let (c, gamma, scheme) = (parse(&p[0], &r)?, parse(&p[1], &r)?, p[2].parse()?);
            let lab: Vec<usize> = parse_all(&r.keyed("labels")?, &r)?;
            let labels = lab.get(1..).map(<[usize]>::to_vec).unwrap_or_default();
            if lab.first() != Some(&labels.len()) {
                return Err(r.err("label count"));
            }
            let n_sv: usize = parse(&r.keyed("support")?[0], &r)?;
            let d = normalizer.dim();
            let mut support_vectors = Vec::with_capacity(n_sv * d);
            let mut support_origin = Vec::with_capacity(n_sv);
            for _ in 0..n_sv {
                let line = r.next_line()?;
                let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                if toks.len() != d + 1 {
                    return Err(r.err("support vector length"));
                }
                support_origin.push(parse(&toks[0], &r)?);
                support_vectors.extend(parse_all::<T>(&toks[1..], &r)?);
            }
            let count: usize = parse(&r.keyed("machines")?[0], &r)?;
            let mut machines = Vec::with_capacity(count);
            for _ in 0..count {
                let h = r.keyed("machine")?;
                if h.len() != 4 {
                    return Err(r.err("machine header"));
                }
                let positive = parse(&h[0], &r)?;
                let negative = if h[1] == "-" { None } else { Some(parse(&h[1], &r)?) };
                let rho = parse(&h[2], &r)?;
                let n: usize = parse(&h[3], &r)?;
                let line = r.next_line()?;
                let mut support = Vec::with_capacity(n);
                let mut coef = Vec::with_capacity(n);
                for pair in line.split_whitespace() {
                    let (s, c) = pair.split_once(':').ok_or_else(|| r.err("expected slot:coef"))?;
                    let slot: usize = parse(s, &r)?;
                    if slot >= n_sv {
                        return Err(r.err("support slot out of range"));
                    }
                    support.push(slot);
                    coef.push(parse(c, &r)?);
                }
                if support.len() != n {
                    return Err(r.err("machine support count"));
                }
                machines.push(BinaryMachine { positive, negative, support, coef, rho });
            }
            Classifier::Svm(SvmModel {
                normalizer,
                c,
                gamma,
                scheme,
                class_count: classes,
                classes: labels,
                support_vectors,
                support_origin,
                machines,
            })
        }
        _ => return Err(Error::Format(format!("unknown model kind {kind:?}"))),
    };
    if r.next_line()?.trim() != "end" {
        return Err(r.err("expected `end`"));
    }
    Ok(model)
}
