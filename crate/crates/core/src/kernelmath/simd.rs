/// Resets the upper halves of the vector registers after wide SIMD kernels.
///
/// On some x86 parts, scalar libm calls (`exp`, `ln`) run tens of times
/// slower while that state is dirty.
#[inline]
pub(crate) fn clear_upper_state() {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: AVX support was checked at runtime; vzeroupper touches
            // no memory and only zeroes register bits above 128.
            unsafe { std::arch::asm!("vzeroupper", options(nomem, nostack, preserves_flags)) };
        }
    }
}
