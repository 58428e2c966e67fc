use clap::ValueEnum;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Select {
    Top,
    Bottom,
}

/// Ids of the best (`Top`) or worst (`Bottom`) `ceil(fraction * n)` items.
/// The sort is stable, so equal scores keep their input order.
pub fn decile_filter(
    items: &[(String, f64)],
    select: Select,
    fraction: f64,
) -> Result<Vec<String>, CliError> {
    if items.is_empty() {
        return Err(CliError::Input("no scores to select from".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CliError::Input(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if let Some((id, _)) = items.iter().find(|(_, s)| !s.is_finite()) {
        return Err(CliError::Input(format!("score for {id} is not finite")));
    }
    // tolerance keeps 0.1 * 30 from rounding up to 4
    let keep = ((fraction * items.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<&(String, f64)> = items.iter().collect();
    match select {
        Select::Top => order.sort_by(|a, b| b.1.total_cmp(&a.1)),
        Select::Bottom => order.sort_by(|a, b| a.1.total_cmp(&b.1)),
    }
    Ok(order
        .into_iter()
        .take(keep)
        .map(|(id, _)| id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(scores: &[f64]) -> Vec<(String, f64)> {
        scores
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("i{i}"), *s))
            .collect()
    }

    #[test]
    fn top_tenth_of_ten_is_the_max() {
        let v = items(&[3.0, 9.0, 1.0, 4.0, 5.0, 2.0, 6.0, 8.0, 7.0, 0.5]);
        assert_eq!(decile_filter(&v, Select::Top, 0.1).unwrap(), vec!["i1"]);
    }

    #[test]
    fn bottom_of_ascending_input_is_first() {
        let v = items(&(0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(decile_filter(&v, Select::Bottom, 0.1).unwrap(), vec!["i0"]);
    }

    #[test]
    fn ties_keep_input_order() {
        let v = items(&[1.0; 7]);
        assert_eq!(
            decile_filter(&v, Select::Top, 0.3).unwrap(),
            vec!["i0", "i1", "i2"]
        );
        assert_eq!(
            decile_filter(&v, Select::Bottom, 0.3).unwrap(),
            vec!["i0", "i1", "i2"]
        );
    }

    #[test]
    fn rounding_and_errors() {
        let v = items(&vec![0.0; 30]);
        assert_eq!(decile_filter(&v, Select::Top, 0.1).unwrap().len(), 3);
        assert_eq!(
            decile_filter(&items(&[1.0, 2.0]), Select::Top, 0.01)
                .unwrap()
                .len(),
            1
        );
        assert!(decile_filter(&[], Select::Top, 0.1).is_err());
        assert!(decile_filter(&v, Select::Top, 0.0).is_err());
        assert!(decile_filter(&v, Select::Top, 1.5).is_err());
    }
}
