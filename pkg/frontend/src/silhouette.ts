/** Foreground pixel counting for preview images.
 *
 * Conditioning images and stub generations both keep the background at
 * exactly zero, so the body silhouette is simply the set of pixels with any
 * nonzero colour channel.
 */

export function countForegroundRgba(
  rgba: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
): number {
  if (rgba.length < width * height * 4) {
    throw new Error(`buffer holds ${rgba.length} bytes, need ${width * height * 4}`);
  }
  let count = 0;
  for (let i = 0; i < width * height; i++) {
    const o = i * 4;
    if (rgba[o] !== 0 || rgba[o + 1] !== 0 || rgba[o + 2] !== 0) count++;
  }
  return count;
}
