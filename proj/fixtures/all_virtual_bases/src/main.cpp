// Every base of D is virtual; D's ctor constructs them at +0x10, +0x20, +0x30.
class A {
public:
  int a;
  virtual void af() { a++; }
};
class B {
public:
  int b;
  virtual void bf() { b++; }
};
class C {
public:
  int c;
  virtual void cf() { c++; }
};
class D : public virtual A, public virtual B, public virtual C {
public:
  int d;
  virtual void df() { d++; }
};

int main() {
  D *d = new D();
  d->df();
  return 0;
}
