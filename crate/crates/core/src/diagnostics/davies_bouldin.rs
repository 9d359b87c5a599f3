use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{sq_dist, Scalar};

/// Mean embedding of each class. Errors on an empty class.
pub fn class_centroids<F: Scalar>(dataset: &Dataset<F>) -> Result<Vec<Vec<F>>> {
    let (k, d) = (dataset.num_classes(), dataset.dim());
    let mut sums = vec![vec![F::zero(); d]; k];
    let mut counts = vec![0usize; k];
    for (i, s) in dataset.samples().iter().enumerate() {
        counts[s.label] += 1;
        for (acc, &v) in sums[s.label].iter_mut().zip(dataset.x(i)) {
            *acc = *acc + v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass {
            index: c,
            name: dataset.catalog().name(c).unwrap_or_default().to_string(),
        });
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| {
            let n = F::count(n);
            s.into_iter().map(|v| v / n).collect()
        })
        .collect())
}

/// Davies-Bouldin index with mean (not RMS) distance-to-centroid scatter.
pub fn davies_bouldin<F: Scalar>(dataset: &Dataset<F>) -> Result<F> {
    let k = dataset.num_classes();
    let centroids = class_centroids(dataset)?;
    let mut scatter = vec![F::zero(); k];
    let mut counts = vec![0usize; k];
    for (i, s) in dataset.samples().iter().enumerate() {
        scatter[s.label] = scatter[s.label] + sq_dist(dataset.x(i), &centroids[s.label]).sqrt();
        counts[s.label] += 1;
    }
    for (s, n) in scatter.iter_mut().zip(&counts) {
        *s = *s / F::count(*n);
    }
    let mut total = F::zero();
    for i in 0..k {
        let mut worst = F::zero();
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = sq_dist(&centroids[i], &centroids[j]).sqrt();
            if sep == F::zero() {
                return Err(Error::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total = total + worst;
    }
    Ok(total / F::count(k))
}
