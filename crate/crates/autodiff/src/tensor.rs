//! Dense row-major f64 tensors of rank 1 or 2.

/// A dense tensor. Every constructor validates that entries are finite;
/// producing NaN or infinity anywhere is a hard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self::checked(shape, data, "tensor construction")
    }

    /// Construct with a context string used in the non-finite panic message.
    pub fn checked(shape: Vec<usize>, data: Vec<f64>, ctx: &str) -> Self {
        assert!(
            shape.len() == 1 || shape.len() == 2,
            "{ctx}: rank must be 1 or 2, got shape {shape:?}"
        );
        let expect: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            expect,
            "{ctx}: data length {} does not match shape {shape:?}",
            data.len()
        );
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            panic!("{ctx}: non-finite value {bad}");
        }
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(vec![1], vec![x])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a matrix, or 1 for a vector.
    pub fn rows(&self) -> usize {
        if self.rank() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Columns of a matrix, or the length of a vector.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() needs a single-element tensor");
        self.data[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..][..c]
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn linf_distance(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
