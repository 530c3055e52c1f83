//! Event counters shared by the drivers.
//!
//! Element counts follow the cost model's units: one unit is one `f64` read
//! or written in slow memory. Writes into packed buffers are not counted.
//! Flop counts weight an addition as 2 flops, like a multiply-add.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct ExecStats {
    a_pack_calls: AtomicU64,
    b_pack_calls: AtomicU64,
    microkernel_calls: AtomicU64,
    /// Source elements read while packing A (one per term per element).
    a_pack_reads: AtomicU64,
    b_pack_reads: AtomicU64,
    /// C elements loaded plus stored by the micro-kernel, per destination.
    c_kernel_transfers: AtomicU64,
    /// Quadrant-sized passes over temporaries (AB and Naive only).
    a_temp_passes: AtomicU64,
    b_temp_passes: AtomicU64,
    c_temp_passes: AtomicU64,
    mult_flops: AtomicU64,
    a_add_flops: AtomicU64,
    b_add_flops: AtomicU64,
    c_update_flops: AtomicU64,
    alloc_nanos: AtomicU64,
}

/// Plain-value copy of [`ExecStats`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub a_pack_calls: u64,
    pub b_pack_calls: u64,
    pub microkernel_calls: u64,
    pub a_pack_reads: u64,
    pub b_pack_reads: u64,
    pub c_kernel_transfers: u64,
    pub a_temp_passes: u64,
    pub b_temp_passes: u64,
    pub c_temp_passes: u64,
    pub mult_flops: u64,
    pub a_add_flops: u64,
    pub b_add_flops: u64,
    pub c_update_flops: u64,
    pub alloc_nanos: u64,
}

impl StatsSnapshot {
    pub fn total_flops(&self) -> u64 {
        self.mult_flops + self.a_add_flops + self.b_add_flops + self.c_update_flops
    }
}

macro_rules! counters {
    ($($field:ident => $add:ident),* $(,)?) => {
        impl ExecStats {
            $(
                #[inline]
                pub(crate) fn $add(&self, n: u64) {
                    self.$field.fetch_add(n, Ordering::Relaxed);
                }
            )*

            pub fn snapshot(&self) -> StatsSnapshot {
                StatsSnapshot { $($field: self.$field.load(Ordering::Relaxed)),* }
            }

            pub fn reset(&self) {
                $(self.$field.store(0, Ordering::Relaxed);)*
            }
        }
    };
}

counters! {
    a_pack_calls => add_a_pack_calls,
    b_pack_calls => add_b_pack_calls,
    microkernel_calls => add_microkernel_calls,
    a_pack_reads => add_a_pack_reads,
    b_pack_reads => add_b_pack_reads,
    c_kernel_transfers => add_c_kernel_transfers,
    a_temp_passes => add_a_temp_passes,
    b_temp_passes => add_b_temp_passes,
    c_temp_passes => add_c_temp_passes,
    mult_flops => add_mult_flops,
    a_add_flops => add_a_add_flops,
    b_add_flops => add_b_add_flops,
    c_update_flops => add_c_update_flops,
    alloc_nanos => add_alloc_nanos,
}
