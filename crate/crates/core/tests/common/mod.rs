//! Shared test support: independent oracles (one-sided Jacobi SVD, naive
//! cluster metrics, central finite differences, adjusted Rand index) and a
//! minimal scripted HTTP server. Oracles are deliberately written with plain
//! loops on plain Vecs, sharing no code with the implementation they check.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use ndarray::Array2;

use beyondwords_core::autoencoder::{reconstruction_loss, AutoencoderParams, Gradients};

/// Singular values of `a` by one-sided Jacobi column orthogonalization,
/// sorted non-increasing.
pub fn one_sided_jacobi_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let (n, k) = a.dim();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| a[(i, j)]).collect()).collect();
    let frob: f64 = cols.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(1e-300);

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()).max(1e-300) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let vp = cols[p][i];
                    let vq = cols[q][i];
                    cols[p][i] = c * vp - s * vq;
                    cols[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sigma
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn naive_centroids(x: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = x[0].len();
    let mut cents = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.iter().zip(labels) {
        counts[l] += 1;
        for (c, v) in cents[l].iter_mut().zip(row) {
            *c += v;
        }
    }
    for (cent, &count) in cents.iter_mut().zip(&counts) {
        for c in cent.iter_mut() {
            *c /= count as f64;
        }
    }
    cents
}

pub fn naive_silhouette(x: &[Vec<f64>], labels: &[usize]) -> (Vec<f64>, f64) {
    let n = x.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        if counts[labels[i]] == 1 {
            scores.push(0.0);
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            sums[labels[j]] += dist(&x[i], &x[j]);
        }
        let a = sums[labels[i]] / (counts[labels[i]] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != labels[i] {
                b = b.min(sums[c] / counts[c] as f64);
            }
        }
        let m = a.max(b);
        scores.push(if m == 0.0 { 0.0 } else { (b - a) / m });
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    (scores, mean)
}

pub fn naive_ch(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = x.len();
    let k = labels.iter().max().unwrap() + 1;
    let dim = x[0].len();
    let cents = naive_centroids(x, labels, k);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut global = vec![0.0; dim];
    for row in x {
        for (g, v) in global.iter_mut().zip(row) {
            *g += v;
        }
    }
    for g in global.iter_mut() {
        *g /= n as f64;
    }
    let mut between = 0.0;
    for c in 0..k {
        let mut acc = 0.0;
        for j in 0..dim {
            let d = cents[c][j] - global[j];
            acc += d * d;
        }
        between += counts[c] as f64 * acc;
    }
    let mut within = 0.0;
    for (row, &l) in x.iter().zip(labels) {
        for j in 0..dim {
            let d = row[j] - cents[l][j];
            within += d * d;
        }
    }
    if within == 0.0 {
        return f64::INFINITY;
    }
    (between / within) * ((n - k) as f64 / (k - 1) as f64)
}

pub fn naive_db(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let cents = naive_centroids(x, labels, k);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut sigma = vec![0.0; k];
    for (row, &l) in x.iter().zip(labels) {
        sigma[l] += dist(row, &cents[l]);
    }
    for (s, &c) in sigma.iter_mut().zip(&counts) {
        *s /= c as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = dist(&cents[i], &cents[j]);
            worst = worst.max((sigma[i] + sigma[j]) / d);
        }
        total += worst;
    }
    total / k as f64
}

/// Central finite differences of the reconstruction loss over the flattened
/// parameter vector; forward passes only.
pub fn fd_gradient(params: &AutoencoderParams<f64>, batch: &Array2<f64>, step: f64) -> Vec<f64> {
    let mut flat = params.flatten();
    let mut work = params.clone();
    let mut out = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + step;
        work.assign_flat(&flat);
        let plus = reconstruction_loss(&work, batch).unwrap();
        flat[i] = orig - step;
        work.assign_flat(&flat);
        let minus = reconstruction_loss(&work, batch).unwrap();
        flat[i] = orig;
        out[i] = (plus - minus) / (2.0 * step);
    }
    out
}

/// Analytic gradients flattened in the same order as `AutoencoderParams::flatten`.
pub fn flatten_gradients(g: &Gradients<f64>) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|(w, b)| w.iter().copied().chain(b.iter().copied()))
        .collect()
}

fn comb2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let sum_ij: f64 = table.iter().flatten().map(|&n| comb2(n)).sum();
    let sum_a: f64 = table.iter().map(|row| comb2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = comb2(a.len());
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

/// Minimal scripted HTTP/1.1 server: serves the given (status, body) pairs in
/// order, one connection each, recording request bodies.
pub struct TestServer {
    pub url: String,
    bodies: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn spawn(responses: Vec<(u16, String)>) -> TestServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let bodies_clone = Arc::clone(&bodies);
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                let request = read_request(&mut stream);
                bodies_clone.lock().unwrap().push(request);
                let reason = match status {
                    200 => "OK",
                    429 => "Too Many Requests",
                    500 => "Internal Server Error",
                    _ => "Status",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        TestServer {
            url: format!("http://{addr}"),
            bodies,
            handle: Some(handle),
        }
    }

    /// Request bodies received so far, in order.
    pub fn finish(mut self) -> Vec<String> {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        let guard = self.bodies.lock().unwrap();
        guard.clone()
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end;
    loop {
        match stream.read(&mut chunk) {
            Ok(0) => return String::from_utf8_lossy(&buf).into_owned(),
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(_) => return String::from_utf8_lossy(&buf).into_owned(),
        }
        if let Some(pos) = find_header_end(&buf) {
            header_end = pos;
            break;
        }
    }
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
    let content_length: usize = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0);
    let body_start = header_end + 4;
    while buf.len() < body_start + content_length {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(_) => break,
        }
    }
    String::from_utf8_lossy(&buf[body_start..]).into_owned()
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}
