// Keystroke-to-class mapping: digits follow the label-space order and the
// two workhorse classes stay reachable in one keystroke regardless of
// position ("e" = empty, "o" = others).

export interface KeyBinding {
  key: string;
  className: string;
}

export function keyBindings(classes: string[]): KeyBinding[] {
  const bindings: KeyBinding[] = [];
  classes.forEach((name, index) => {
    if (index < 9) bindings.push({ key: String(index + 1), className: name });
  });
  if (classes.includes('empty')) bindings.push({ key: 'e', className: 'empty' });
  if (classes.includes('others')) bindings.push({ key: 'o', className: 'others' });
  return bindings;
}

export function classForKey(classes: string[], key: string): string | null {
  for (const binding of keyBindings(classes)) {
    if (binding.key === key) return binding.className;
  }
  return null;
}
