import type { DetectorBox } from './types.js';

export interface PixelRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Map a normalized detector box onto a rendered image of the given size. */
export function boxToPixels(box: DetectorBox, imageWidth: number, imageHeight: number): PixelRect {
  const [x, y, w, h] = box.bbox;
  return {
    left: x * imageWidth,
    top: y * imageHeight,
    width: w * imageWidth,
    height: h * imageHeight,
  };
}

export function boxColor(confidence: number): string {
  if (confidence >= 0.8) return '#27ae60';
  if (confidence >= 0.5) return '#f39c12';
  return '#c0392b';
}

export function drawBoxes(
  ctx: CanvasRenderingContext2D,
  boxes: DetectorBox[],
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  for (const box of boxes) {
    const rect = boxToPixels(box, width, height);
    ctx.strokeStyle = boxColor(box.confidence);
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.left, rect.top, rect.width, rect.height);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.font = '12px sans-serif';
    ctx.fillText(box.confidence.toFixed(2), rect.left + 3, Math.max(rect.top - 4, 12));
  }
}
