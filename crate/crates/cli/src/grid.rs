//! Grid syntax: `start:step:stop` (inclusive), a comma list, or one value.

pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty grid".into());
    }
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid {text:?} must be start:step:stop"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in grid {text:?}"));
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err(format!("grid {text:?} needs finite bounds and a positive step"));
        }
        if stop < start {
            return Err(format!("grid {text:?} is empty"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if n > 1_000_000 {
            return Err(format!("grid {text:?} has {n} points"));
        }
        (0..n).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in grid {text:?}")))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("grid {text:?} has non-finite values"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_grid("0:10:40").unwrap(), vec![0.0, 10.0, 20.0, 30.0, 40.0]);
        assert_eq!(parse_grid("0:0.5:1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0:0.1:0.3").unwrap().len(), 4);
        assert_eq!(parse_grid("1:2:4").unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_grid("5").unwrap(), vec![5.0]);
        assert_eq!(parse_grid("1, 2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
    }

    #[test]
    fn errors() {
        for bad in ["", "  ", "4:1:0", "0:0:1", "0:-1:4", "a:1:2", "1:2", "1,,2", "nan"] {
            assert!(parse_grid(bad).is_err(), "{bad:?}");
        }
    }
}
