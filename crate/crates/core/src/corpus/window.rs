/// A slice `[start, end)` of a subword sequence fed to the encoder in one pass.
///
/// The first `context_prefix_len` positions only provide context; their
/// predictions are discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub context_prefix_len: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// First absolute position whose prediction is kept.
    pub fn owned_start(&self) -> usize {
        self.start + self.context_prefix_len
    }
}

pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_CONTEXT_LEN: usize = 64;

/// Sliding windows over a sequence of `len` positions.
///
/// Every window after the first starts `context_len` positions before the
/// previous window's end.
pub fn make_windows(len: usize, max_len: usize, context_len: usize) -> Vec<Window> {
    assert!(context_len < max_len, "context_len must be below max_len");
    let mut windows = vec![Window {
        start: 0,
        end: len.min(max_len),
        context_prefix_len: 0,
    }];
    while windows.last().unwrap().end < len {
        let prev_end = windows.last().unwrap().end;
        let start = prev_end - context_len;
        windows.push(Window {
            start,
            end: (start + max_len).min(len),
            context_prefix_len: context_len,
        });
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_sequence_is_one_window() {
        assert_eq!(
            make_windows(100, 128, 64),
            vec![Window {
                start: 0,
                end: 100,
                context_prefix_len: 0
            }]
        );
        assert_eq!(make_windows(128, 128, 64).len(), 1);
    }

    #[test]
    fn long_sequence_strides_by_context() {
        let w = make_windows(300, 128, 64);
        let starts: Vec<usize> = w.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 64, 128, 192]);
        // ceil((300 - 128) / 64) + 1
        assert_eq!(w.len(), (300usize - 128).div_ceil(64) + 1);
        assert_eq!(w.last().unwrap().end, 300);
    }

    proptest! {
        #[test]
        fn owned_regions_partition_positions(len in 1usize..700, max_len in 2usize..200, ctx_frac in 0.0f64..1.0) {
            let context_len = ((max_len as f64 - 1.0) * ctx_frac) as usize;
            let windows = make_windows(len, max_len, context_len);
            let mut covered = vec![0usize; len];
            for w in &windows {
                prop_assert!(w.len() <= max_len);
                for p in w.owned_start()..w.end {
                    covered[p] += 1;
                }
            }
            prop_assert!(covered.iter().all(|&c| c == 1));
        }
    }
}
